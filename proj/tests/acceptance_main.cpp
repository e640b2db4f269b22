// Acceptance suite: runs every round-trip criterion and prints one
// PASS/FAIL line per criterion. Exits nonzero when any criterion fails.

#include <cstdlib>
#include <iostream>

#include "plesim/reproduce.hpp"

int main(int argc, char** argv) {
    plesim::reproduce::Options options;
    if (argc > 1) {
        options.data_dir = argv[1];
    }
    if (argc > 2) {
        options.seed = std::strtoull(argv[2], nullptr, 10);
    }
    if (const char* env = std::getenv("PLESIM_THREADS"); env != nullptr && std::atoi(env) > 0) {
        options.threads = std::atoi(env);
    }

    bool all_ok = true;
    try {
        for (const auto& r : plesim::reproduce::run_acceptance(options)) {
            all_ok = all_ok && r.passed;
            std::cout << (r.passed ? "PASS" : "FAIL") << " criterion " << r.id << ": " << r.name
                      << " -- " << r.detail << std::endl;
        }
    } catch (const std::exception& e) {
        std::cerr << "acceptance suite aborted: " << e.what() << std::endl;
        return 2;
    }
    return all_ok ? 0 : 1;
}
