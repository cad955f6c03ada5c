#include "himosa/common.hpp"

namespace himosa {

namespace {
Precision g_precision = Precision::f64;
}

void set_run_precision(Precision p) { g_precision = p; }
Precision run_precision() { return g_precision; }

}  // namespace himosa
