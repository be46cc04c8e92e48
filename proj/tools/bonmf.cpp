#include "bonmf/cli.hpp"

int main(int argc, char** argv) { return bonmf::cli::run(argc, argv); }
