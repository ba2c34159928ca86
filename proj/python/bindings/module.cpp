#include "app.hpp"

#include "deepls/inference.hpp"
#include "deepls/io.hpp"
#include "deepls/meshing.hpp"
#include "deepls/metrics.hpp"
#include "deepls/pipeline.hpp"
#include "deepls/scenes.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace deepls;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

std::vector<Vec3> to_points(const Points& p) {
  std::vector<Vec3> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = p.row(i).transpose();
  return out;
}

Points from_points(const std::vector<Vec3>& v) {
  Points out(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  return out;
}

py::tuple mesh_to_arrays(const TriangleMesh& m) {
  Faces f(static_cast<Eigen::Index>(m.triangles.size()), 3);
  for (std::size_t i = 0; i < m.triangles.size(); ++i)
    for (int c = 0; c < 3; ++c) f(static_cast<Eigen::Index>(i), c) = m.triangles[i][static_cast<std::size_t>(c)];
  return py::make_tuple(from_points(m.vertices), f);
}

TriangleMesh arrays_to_mesh(const Points& v, const Faces& f) {
  TriangleMesh m;
  m.vertices = to_points(v);
  m.triangles.resize(static_cast<std::size_t>(f.rows()));
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    m.triangles[static_cast<std::size_t>(i)] = {f(i, 0), f(i, 1), f(i, 2)};
  m.validate();
  return m;
}

// An encoded scene: frozen decoder plus latent grid.
class EncodedScene {
 public:
  explicit EncodedScene(const std::string& path) : ck_(load_checkpoint(path)) {
    if (!ck_.grid) throw DataError(path + " holds no encoded grid");
    check_compatible(ck_.decoder, *ck_.grid);
  }

  double voxel_size() const { return ck_.grid->voxel_size(); }
  std::size_t voxel_count() const { return ck_.grid->size(); }
  int code_dim() const { return ck_.decoder.code_dim; }

  py::tuple query(const Points& points) const {
    const auto pts = to_points(points);
    std::vector<double> values(pts.size());
    std::vector<std::uint8_t> valid(pts.size());
    query_sdf_batch(ck_.decoder, *ck_.grid, pts, values, valid);
    Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    Eigen::Matrix<bool, Eigen::Dynamic, 1> ok(static_cast<Eigen::Index>(valid.size()));
    for (std::size_t i = 0; i < valid.size(); ++i) ok(static_cast<Eigen::Index>(i)) = valid[i] != 0;
    return py::make_tuple(v, ok);
  }

  py::tuple mesh(double resolution) const {
    ExtractionConfig ec;
    ec.resolution = resolution > 0.0 ? resolution : 0.25 * voxel_size();
    TriangleMesh m;
    {
      py::gil_scoped_release release;
      m = extract(grid_source(ck_.decoder, *ck_.grid), ck_.grid->bounds(), ec);
    }
    return mesh_to_arrays(m);
  }

 private:
  Checkpoint ck_;
};

}  // namespace

PYBIND11_MODULE(_deepls, m) {
  m.doc() = "Local implicit shape priors: encoding, meshing and metrics";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = app::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command line tool in-process; returns (exit code, stdout, stderr).");

  py::class_<EncodedScene>(m, "EncodedScene")
      .def(py::init<const std::string&>(), py::arg("path"))
      .def_property_readonly("voxel_size", &EncodedScene::voxel_size)
      .def_property_readonly("voxel_count", &EncodedScene::voxel_count)
      .def_property_readonly("code_dim", &EncodedScene::code_dim)
      .def("query", &EncodedScene::query, py::arg("points"),
           "SDF at (N, 3) points; returns (values, valid). Values are 0 where invalid.")
      .def("mesh", &EncodedScene::mesh, py::arg("resolution") = 0.0,
           "Marching cubes over the grid; returns (vertices, triangles).");

  m.def("load_mesh", [](const std::string& path) { return mesh_to_arrays(load_mesh(path)); }, py::arg("path"));
  m.def(
      "save_mesh",
      [](const Points& v, const Faces& f, const std::string& path) { save_mesh(arrays_to_mesh(v, f), path); },
      py::arg("vertices"), py::arg("triangles"), py::arg("path"));
  m.def(
      "icosphere",
      [](double radius, int subdivisions) { return mesh_to_arrays(make_icosphere(Vec3::Zero(), radius, subdivisions)); },
      py::arg("radius") = 1.0, py::arg("subdivisions") = 3);
  m.def(
      "blob",
      [](std::uint64_t seed, double extent) {
        BlobConfig c;
        c.seed = seed;
        c.extent = extent;
        return mesh_to_arrays(make_blob_mesh(c));
      },
      py::arg("seed") = 7, py::arg("extent") = 1.0);

  m.def(
      "chamfer",
      [](const Points& a, const Points& b, const std::string& convention) {
        return chamfer(to_points(a), to_points(b), chamfer_convention_from_string(convention));
      },
      py::arg("a"), py::arg("b"), py::arg("convention") = "squared");
  m.def(
      "completion",
      [](const Points& gt, const Points& pred, double threshold) {
        return completion(to_points(gt), to_points(pred), threshold);
      },
      py::arg("gt"), py::arg("pred"), py::arg("threshold"));
  m.def(
      "accuracy",
      [](const Points& pred, const Points& gt) { return mesh_accuracy(to_points(pred), to_points(gt)); },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "sample_surface",
      [](const Points& v, const Faces& f, std::size_t count, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        return from_points(sample_surface(arrays_to_mesh(v, f), count, rng));
      },
      py::arg("vertices"), py::arg("triangles"), py::arg("count"), py::arg("seed") = 0);
}
