#include "hypalign/cli.hpp"

int main(int argc, char** argv) { return hypalign::cli::main(argc, argv); }
