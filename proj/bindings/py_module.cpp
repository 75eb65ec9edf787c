#include <pybind11/pybind11.h>

namespace py = pybind11;

PYBIND11_MODULE(_tinyattn, m) {
  m.doc() = "tiny-attention adapter workbench";
}
