#include "driftlab/parallel.hpp"

#include <cstdlib>
#include <string>

namespace driftlab {

namespace {
std::atomic<int> g_workers{0};
}

int default_workers()
{
    if (int w = g_workers.load(); w > 0)
        return w;
    if (const char* env = std::getenv("DRIFTLAB_WORKERS")) {
        try {
            int w = std::stoi(env);
            if (w > 0)
                return w;
        } catch (...) {
        }
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

void set_default_workers(int workers) { g_workers = workers; }

} // namespace driftlab
