#include "facedet/dfw.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace facedet {

namespace {

constexpr std::array<char, 4> kMagic = {'D', 'F', 'W', '1'};
constexpr std::uint32_t kMaxRank = 8;

static_assert(std::numeric_limits<float>::is_iec559, "DFW assumes IEEE-754 floats");

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
}

class Writer {
public:
    Writer(std::ostream& out) : out_(out) {}

    void bytes(const void* data, std::size_t n, const std::string& context) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("DFW write failed at entry '" + context + "'");
        count_ += n;
    }
    void u32(std::uint32_t v, const std::string& context) {
        const std::uint32_t le = to_le(v);
        bytes(&le, 4, context);
    }
    void f32s(const std::vector<float>& values, const std::string& context) {
        if constexpr (std::endian::native == std::endian::little) {
            bytes(values.data(), values.size() * sizeof(float), context);
        } else {
            for (float f : values) u32(std::bit_cast<std::uint32_t>(f), context);
        }
    }
    std::uint64_t count() const { return count_; }

private:
    std::ostream& out_;
    std::uint64_t count_ = 0;
};

class Reader {
public:
    Reader(std::istream& in) : in_(in) {}

    void bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError("DFW truncated at offset " + std::to_string(offset_ + in_.gcount()));
        }
        offset_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        bytes(&v, 4);
        return to_le(v);
    }
    std::uint64_t offset() const { return offset_; }

private:
    std::istream& in_;
    std::uint64_t offset_ = 0;
};

}  // namespace

Array Array::vector(std::vector<float> v) {
    Array a;
    a.dims = {static_cast<std::uint32_t>(v.size())};
    a.values = std::move(v);
    return a;
}

Array Array::from_tensor(const Tensor3& t) {
    Array a;
    a.dims = {static_cast<std::uint32_t>(t.height()), static_cast<std::uint32_t>(t.width()),
              static_cast<std::uint32_t>(t.channels())};
    a.values.assign(t.data().begin(), t.data().end());
    return a;
}

std::size_t Array::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

Tensor3 Array::to_tensor() const {
    if (dims.size() != 3) {
        throw DimensionError("expected a rank-3 array, got rank " + std::to_string(dims.size()));
    }
    return Tensor3(dims[0], dims[1], dims[2], values);
}

void WeightStore::put(std::string name, Array value) {
    if (name.empty()) throw FormatError("weight store names must be non-empty");
    if (value.values.size() != value.element_count()) {
        throw DimensionError("entry '" + name + "' has " + std::to_string(value.values.size()) +
                             " values but its dims imply " + std::to_string(value.element_count()));
    }
    for (auto& [n, v] : entries_) {
        if (n == name) {
            v = std::move(value);
            return;
        }
    }
    entries_.emplace_back(std::move(name), std::move(value));
}

const Array* WeightStore::find(std::string_view name) const {
    for (const auto& [n, v] : entries_) {
        if (n == name) return &v;
    }
    return nullptr;
}

bool WeightStore::contains(std::string_view name) const { return find(name) != nullptr; }

const Array& WeightStore::at(std::string_view name) const {
    if (const Array* a = find(name)) return *a;
    throw ConfigError("missing weight store entry '" + std::string(name) + "'");
}

float WeightStore::scalar(std::string_view name) const {
    const Array& a = at(name);
    if (a.values.size() != 1) {
        throw DimensionError("entry '" + std::string(name) + "' is not a scalar");
    }
    return a.values[0];
}

std::uint64_t dfw_write(const WeightStore& store, std::ostream& sink) {
    Writer w(sink);
    w.bytes(kMagic.data(), kMagic.size(), "<header>");
    w.u32(static_cast<std::uint32_t>(store.size()), "<header>");
    for (const auto& [name, array] : store.entries()) {
        w.u32(static_cast<std::uint32_t>(name.size()), name);
        w.bytes(name.data(), name.size(), name);
        w.u32(static_cast<std::uint32_t>(array.dims.size()), name);
        for (auto d : array.dims) w.u32(d, name);
        w.f32s(array.values, name);
    }
    return w.count();
}

WeightStore dfw_read(std::istream& source) {
    Reader r(source);
    std::array<char, 4> magic{};
    r.bytes(magic.data(), magic.size());
    if (magic != kMagic) throw FormatError("bad magic");

    WeightStore store;
    const std::uint32_t count = r.u32();
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint32_t name_len = r.u32();
        if (name_len == 0) throw FormatError("empty entry name at offset " + std::to_string(r.offset()));
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);

        Array a;
        const std::uint32_t rank = r.u32();
        if (rank > kMaxRank) {
            throw FormatError("entry '" + name + "' has unsupported rank " + std::to_string(rank));
        }
        std::uint64_t elements = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            const std::uint32_t d = r.u32();
            a.dims.push_back(d);
            if (d != 0 && elements > std::numeric_limits<std::uint32_t>::max() / d) {
                throw FormatError("entry '" + name + "' dims product overflows");
            }
            elements *= d;
        }
        a.values.resize(elements);
        if constexpr (std::endian::native == std::endian::little) {
            r.bytes(a.values.data(), elements * sizeof(float));
        } else {
            for (auto& v : a.values) v = std::bit_cast<float>(r.u32());
        }
        if (store.contains(name)) throw FormatError("duplicate entry '" + name + "'");
        store.put(std::move(name), std::move(a));
    }
    return store;
}

void dfw_save(const WeightStore& store, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    dfw_write(store, out);
    out.flush();
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

WeightStore dfw_load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return dfw_read(in);
}

}  // namespace facedet
