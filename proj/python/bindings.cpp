#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "darthkit/cli.hpp"
#include "darthkit/errors.hpp"
#include "darthkit/geometry.hpp"
#include "darthkit/losses.hpp"
#include "darthkit/matching.hpp"
#include "darthkit/metrics.hpp"
#include "darthkit/motio.hpp"

namespace py = pybind11;
using namespace darthkit;

PYBIND11_MODULE(_darthkit, m) {
  m.doc() = "Test-time adaptation for appearance-based multi-object tracking (C++ core)";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::class_<BoundingBox>(m, "BoundingBox")
      .def(py::init([](double x1, double y1, double x2, double y2, int class_id, double confidence) {
             return BoundingBox{x1, y1, x2, y2, class_id, confidence};
           }),
           py::arg("x1"), py::arg("y1"), py::arg("x2"), py::arg("y2"), py::arg("class_id") = 0,
           py::arg("confidence") = 1.0)
      .def_readwrite("x1", &BoundingBox::x1)
      .def_readwrite("y1", &BoundingBox::y1)
      .def_readwrite("x2", &BoundingBox::x2)
      .def_readwrite("y2", &BoundingBox::y2)
      .def_readwrite("class_id", &BoundingBox::class_id)
      .def_readwrite("confidence", &BoundingBox::confidence)
      .def("area", &BoundingBox::area)
      .def("__repr__", [](const BoundingBox& b) {
        std::ostringstream s;
        s << "BoundingBox(" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2 << ", class_id=" << b.class_id
          << ", confidence=" << b.confidence << ")";
        return s.str();
      });

  py::class_<WarpRecord>(m, "WarpRecord")
      .def(py::init<>())
      .def_static("identity", &WarpRecord::identity)
      .def_readwrite("scale_x", &WarpRecord::scale_x)
      .def_readwrite("scale_y", &WarpRecord::scale_y)
      .def_readwrite("flip_h", &WarpRecord::flip_h)
      .def_readwrite("crop_offset_x", &WarpRecord::crop_offset_x)
      .def_readwrite("crop_offset_y", &WarpRecord::crop_offset_y)
      .def_readwrite("out_width", &WarpRecord::out_width)
      .def_readwrite("out_height", &WarpRecord::out_height)
      .def_readwrite("src_width", &WarpRecord::src_width)
      .def_readwrite("src_height", &WarpRecord::src_height);

  m.def("iou", &iou);
  m.def("warp_box", &warp_box);
  m.def("inverse_warp_box", &inverse_warp_box);

  m.def(
      "pcl_embed",
      [](const Matrix& v, const Matrix& k, const PairLabels& labels) { return pcl_embed(v, k, labels); },
      py::arg("v"), py::arg("k"), py::arg("labels"));
  m.def("pcl_embed_multi", &pcl_embed_multi, py::arg("v"), py::arg("k"), py::arg("labels"));
  m.def(
      "dc_rpn",
      [](const Vector& s_t, const Matrix& r_t, const Vector& s_s, const Matrix& r_s, double epsilon) {
        return dc_rpn(s_t, r_t, s_s, r_s, epsilon);
      },
      py::arg("s_t"), py::arg("r_t"), py::arg("s_s"), py::arg("r_s"), py::arg("epsilon"));
  m.def(
      "dc_roi",
      [](const Matrix& p_t, const Matrix& t_t, const Matrix& p_s, const Matrix& t_s) {
        return dc_roi(p_t, t_t, p_s, t_s);
      },
      py::arg("p_t"), py::arg("t_t"), py::arg("p_s"), py::arg("t_s"));
  m.def(
      "dc_roi_softmax",
      [](const Matrix& p_t, const Matrix& t_t, const Matrix& p_s, const Matrix& t_s) {
        return dc_roi_softmax(p_t, t_t, p_s, t_s);
      },
      py::arg("p_t"), py::arg("t_t"), py::arg("p_s"), py::arg("t_s"));
  m.def(
      "total_loss",
      [](double embed, double aux, double rpn, double roi) {
        return total_loss(LossParts{embed, aux, rpn, roi}).total;
      },
      py::arg("embed"), py::arg("aux"), py::arg("dc_rpn"), py::arg("dc_roi"));

  m.def(
      "evaluate_dirs",
      [](const std::filesystem::path& gt, const std::filesystem::path& pred, std::vector<int> classes) {
        return evaluate(load_tracks(gt), load_tracks(pred), std::move(classes)).to_json();
      },
      py::arg("gt_dir"), py::arg("pred_dir"), py::arg("classes") = std::vector<int>{},
      "Metrics report as a JSON string; values are percentages.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
