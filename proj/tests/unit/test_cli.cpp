#include "app.hpp"

#include "deepls/io.hpp"
#include "deepls/mesh.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace deepls;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = app::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string work(const std::string& name) {
  const fs::path dir = fs::absolute("cli_work");
  fs::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::vector<std::string> kTinyTrain{"--primitives", "3",  "--steps",         "40", "--code-dim",
                                          "8",            "--hidden-dim", "16",    "--layers", "3",
                                          "--max-patches-per-shape", "8", "--batch-voxels", "4",
                                          "--samples-per-voxel", "32", "--quiet"};

std::string tiny_prior() {
  static const std::string path = [] {
    const std::string p = work("prior.dls");
    std::vector<std::string> args{"train-prior", "-o", p};
    args.insert(args.end(), kTinyTrain.begin(), kTinyTrain.end());
    const auto r = cli(args);
    REQUIRE(r.code == 0);
    return p;
  }();
  return path;
}

std::string sphere_mesh() {
  static const std::string path = [] {
    const std::string p = work("sphere.obj");
    REQUIRE(cli({"generate", "primitive", "--kind", "sphere", "--size", "0.5", "0.5", "0.5", "--step", "0.05", "-o", p})
                .code == 0);
    return p;
  }();
  return path;
}

std::string encoded_sphere() {
  static const std::string path = [] {
    const std::string p = work("sphere_grid.dls");
    const auto r = cli({"encode", "--checkpoint", tiny_prior(), "--mesh", sphere_mesh(), "--voxel-size", "0.125",
                        "--iterations", "20", "-o", p});
    REQUIRE(r.code == 0);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"no-such-command"}).code == 1);
  CHECK(cli({"train-prior", "--steps", "0", "-o", work("never.dls")}).code == 1);
  CHECK_FALSE(fs::exists(work("never.dls")));
  CHECK(cli({"encode", "--checkpoint", work("missing.dls"), "--mesh", sphere_mesh(), "--voxel-size", "0.1", "-o",
             work("x.dls")})
            .code == 1);
  const auto zero = cli({"encode", "--checkpoint", tiny_prior(), "--mesh", sphere_mesh(), "--voxel-size", "0", "-o",
                         work("x.dls")});
  CHECK(zero.code == 1);
  CHECK(zero.err.find("usage error") != std::string::npos);
  CHECK(cli({"eval", "--pred", sphere_mesh(), "--gt", sphere_mesh(), "--chamfer", "cubic"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("training twice with one seed writes identical loss curves") {
  std::vector<std::string> a{"train-prior", "-o", work("a.dls")}, b{"train-prior", "-o", work("b.dls")};
  a.insert(a.end(), kTinyTrain.begin(), kTinyTrain.end());
  b.insert(b.end(), kTinyTrain.begin(), kTinyTrain.end());
  REQUIRE(cli(a).code == 0);
  REQUIRE(cli(b).code == 0);
  const auto curve = slurp(work("a.dls.loss.csv"));
  CHECK(curve.rfind("epoch,lr,loss\n", 0) == 0);
  CHECK(curve == slurp(work("b.dls.loss.csv")));
  CHECK(slurp(work("a.dls")) == slurp(work("b.dls")));
  CHECK(fs::exists(work("a.dls.manifest.json")));
}

TEST_CASE("encode then reconstruct a sphere") {
  const auto ck = load_checkpoint(encoded_sphere());
  REQUIRE(ck.grid.has_value());
  CHECK(ck.grid->size() > 0);
  CHECK(ck.grid->voxel_size() == 0.125);
  CHECK(fs::exists(encoded_sphere() + ".manifest.json"));

  const auto full = cli({"reconstruct", "--grid", encoded_sphere(), "-o", work("sphere_rec.obj")});
  REQUIRE(full.code == 0);
  const auto masked = cli({"reconstruct", "--grid", encoded_sphere(), "--mask-radius", "0.05", "--observations",
                           sphere_mesh(), "-o", work("sphere_masked.obj")});
  REQUIRE(masked.code == 0);
  const auto a = load_mesh(work("sphere_rec.obj")), b = load_mesh(work("sphere_masked.obj"));
  CHECK(b.triangles.size() <= a.triangles.size());

  // Observations far from every cell mask everything: warning, still success.
  std::ofstream(work("far.csv")) << "x,y,z,sdf,weight\n50,50,50,0,1\n";
  const auto empty = cli({"reconstruct", "--grid", encoded_sphere(), "--mask-radius", "0.01", "--observations",
                          work("far.csv"), "-o", work("sphere_empty.obj")});
  CHECK(empty.code == 0);
  CHECK(empty.err.find("warning: extracted mesh is empty") != std::string::npos);
  CHECK(load_mesh(work("sphere_empty.obj")).empty());

  CHECK(cli({"reconstruct", "--grid", encoded_sphere(), "--mask-radius", "0.05", "-o", work("y.obj")}).code == 1);
  CHECK(cli({"reconstruct", "--grid", tiny_prior(), "-o", work("y.obj")}).code == 2);
}

TEST_CASE("fusing a plane puts the surface at its depth") {
  CameraIntrinsics cam;
  DepthFrame f = make_frame(cam, RigidTransform{});
  std::fill(f.depth.begin(), f.depth.end(), 2.0F);
  save_depth(f, work("plane.dlsd"));
  const auto r = cli({"fuse", "--depth", work("plane.dlsd"), "--voxel-size", "0.05", "--bounds", "-0.4", "-0.4", "1.6",
                      "0.4", "0.4", "2.4", "-o", work("plane.obj"), "--tsdf-out", work("plane.dlst")});
  REQUIRE(r.code == 0);
  const auto mesh = load_mesh(work("plane.obj"));
  REQUIRE_FALSE(mesh.empty());
  for (const auto& v : mesh.vertices) CHECK(std::abs(v.z() - 2.0) < 0.05);
  CHECK(load_tsdf(work("plane.dlst")).voxel_size() == 0.05);
}

TEST_CASE("evaluating meshes") {
  const auto same = cli({"eval", "--pred", sphere_mesh(), "--gt", sphere_mesh(), "--completion-threshold", "0.05",
                         "-o", work("same.csv")});
  REQUIRE(same.code == 0);
  std::ifstream csv(work("same.csv"));
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK(header.rfind("chamfer,", 0) == 0);
  const double chamfer = std::stod(row.substr(0, row.find(',')));
  CHECK(chamfer < 1e-3);

  // Upper half of a sphere against the whole sphere.
  const auto ball = make_icosphere(Vec3::Zero(), 0.5, 5);
  TriangleMesh half;
  half.vertices = ball.vertices;
  for (const auto& t : ball.triangles)
    if (ball.vertices[static_cast<std::size_t>(t[0])].z() >= 0 && ball.vertices[static_cast<std::size_t>(t[1])].z() >= 0 &&
        ball.vertices[static_cast<std::size_t>(t[2])].z() >= 0)
      half.triangles.push_back(t);
  save_mesh(ball, work("ball.obj"));
  save_mesh(half, work("half.obj"));
  const auto hr = cli({"eval", "--pred", work("half.obj"), "--gt", work("ball.obj"), "--completion-threshold", "0.01",
                       "--manifest", work("half.json")});
  REQUIRE(hr.code == 0);
  std::ifstream mj(work("half.json"));
  std::stringstream text;
  text << mj.rdbuf();
  const std::string key = "\"completion\"";
  const auto at = text.str().find(key);
  REQUIRE(at != std::string::npos);
  const auto value_at = text.str().find("\"value\":", at);
  const double completion = std::stod(text.str().substr(value_at + 8));
  CHECK(completion == doctest::Approx(0.5).epsilon(0.1));

  TriangleMesh nothing;
  nothing.vertices = {Vec3::Zero()};
  save_mesh(nothing, work("nothing.obj"));
  const auto empty = cli({"eval", "--pred", work("nothing.obj"), "--gt", work("ball.obj")});
  CHECK(empty.code == 2);
  CHECK(empty.out.find("empty_prediction") != std::string::npos);
  CHECK(cli({"eval", "--pred", work("ball.obj"), "--gt", work("nothing.obj")}).code == 2);
}

TEST_CASE("replay reproduces a run") {
  const std::string out = work("replay_src.dls");
  std::vector<std::string> args{"train-prior", "-o", out};
  args.insert(args.end(), kTinyTrain.begin(), kTinyTrain.end());
  REQUIRE(cli(args).code == 0);
  const auto r = cli({"replay", out + ".manifest.json", "--out-dir", work("replayed")});
  CHECK(r.code == 0);
  CHECK(r.out.find("replay reproduced the run") != std::string::npos);
  CHECK(slurp(work("replayed/replay_src.dls")) == slurp(out));

  const auto enc = cli({"replay", encoded_sphere() + ".manifest.json", "--out-dir", work("replayed_enc")});
  CHECK(enc.code == 0);
  CHECK(enc.out.find("DIFFERS") == std::string::npos);

  std::ofstream(work("junk.json")) << "{\"hello\": 1}";
  CHECK(cli({"replay", work("junk.json")}).code == 2);
}
