#include "senseflow/parallel.hpp"

#include <cstdlib>
#include <string>

namespace senseflow {

namespace {

std::atomic<int> g_override{0};

int env_threads()
{
    const char* s = std::getenv("SENSEFLOW_THREADS");
    if (s == nullptr || *s == '\0') return 0;
    try {
        return std::max(0, std::stoi(s));
    } catch (const std::exception&) {
        return 0;
    }
}

} // namespace

int thread_count()
{
    int n = g_override.load();
    if (n <= 0) n = env_threads();
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, n);
}

void set_thread_count(int n) { g_override.store(std::max(0, n)); }

} // namespace senseflow
