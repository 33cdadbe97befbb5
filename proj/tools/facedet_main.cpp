#include "facedet/cli.hpp"

int main(int argc, char** argv) { return facedet::run_cli(argc, argv); }
