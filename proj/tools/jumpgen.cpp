#include <jumpgen/cli.hpp>

int main(int argc, char** argv) { return jumpgen::run_main(argc, argv); }
