#include "ijat/cli.hpp"

int main(int argc, char** argv) { return ijat::cli::run(argc, argv); }
