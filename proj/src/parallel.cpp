#include "rp/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rp {

void set_workers(int workers) {
#ifdef _OPENMP
  omp_set_num_threads(workers > 0 ? workers : omp_get_num_procs());
#else
  (void)workers;
#endif
}

int workers() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace rp
