import numba as _numba

_numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
