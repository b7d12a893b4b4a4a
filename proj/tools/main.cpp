#include "proofblocks/cli.hpp"

int main(int argc, char** argv) { return proofblocks::cli::run(argc, argv); }
