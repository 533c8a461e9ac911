#include <string>
#include <vector>

#include "amoc/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return amoc::run_command(args);
}
