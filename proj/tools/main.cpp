#include "rumpl/cli.hpp"

int main(int argc, char** argv) { return rumpl::cli::run(argc, argv); }
