#include "dstl/cli.hpp"

int main(int argc, char** argv) { return dstl::cli::run(argc, argv); }
