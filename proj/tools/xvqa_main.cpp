#include "xvqa/cli.hpp"

int main(int argc, char** argv) { return xvqa::cli::run(argc, argv); }
