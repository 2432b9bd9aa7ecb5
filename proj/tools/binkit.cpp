#include <string>
#include <vector>

#include "binkit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return binkit::cli::dispatch(args);
}
