#include "trajcur/cli.hpp"

int main(int argc, char** argv) { return trajcur::cli::run(argc, argv); }
