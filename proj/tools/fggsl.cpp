#include "fggsl/cli.hpp"

int main(int argc, char** argv) { return fggsl::run_cli(argc, argv); }
