#include "deepls/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

using namespace deepls;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "deepls_test_io";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

TriangleMesh tetrahedron() {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  m.triangles = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  return m;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("OBJ round trip") {
  const auto path = scratch("tet.obj").string();
  const auto m = tetrahedron();
  save_obj(m, path);
  const auto back = load_obj(path);
  CHECK(back.vertices == m.vertices);
  CHECK(back.triangles == m.triangles);
  CHECK(load_mesh(path).triangles == m.triangles);
}

TEST_CASE("OBJ quads are fanned and slash indices accepted") {
  const auto path = scratch("quad.obj");
  write_text(path, "# comment\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1 4/4/1\n");
  const auto m = load_obj(path.string());
  REQUIRE(m.triangles.size() == 2);
  CHECK(m.triangles[0] == std::array<int, 3>{0, 1, 2});
  CHECK(m.triangles[1] == std::array<int, 3>{0, 2, 3});
  CHECK(m.area() == doctest::Approx(1.0));
}

TEST_CASE("OBJ errors name the offending line") {
  const auto path = scratch("bad.obj");
  write_text(path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
  const auto msg = error_of([&] { load_obj(path.string()); });
  CHECK(msg.find(":4:") != std::string::npos);
  CHECK(msg.find("out of range") != std::string::npos);
  write_text(path, "v 0 0 zero\n");
  CHECK_THROWS_AS(load_obj(path.string()), FormatError);
  CHECK_THROWS_AS(load_obj(scratch("missing.obj").string()), DataError);
}

TEST_CASE("PLY round trip") {
  const auto path = scratch("tet.ply").string();
  const auto m = tetrahedron();
  save_ply(m, path);
  const auto back = load_ply(path);
  CHECK(back.vertices == m.vertices);
  CHECK(back.triangles == m.triangles);
  CHECK(load_mesh(path).vertices == m.vertices);
  write_text(scratch("not.ply"), "hello\n");
  CHECK_THROWS_AS(load_ply(scratch("not.ply").string()), FormatError);
}

TEST_CASE("depth frames round-trip bit-exactly") {
  CameraIntrinsics cam;
  cam.width = 7;
  cam.height = 5;
  cam.fx = 11.5;
  cam.fy = 12.25;
  cam.cx = 3.0;
  cam.cy = 2.0;
  std::mt19937_64 rng(2);
  DepthFrame f = make_frame(cam, RigidTransform::random_rotation(rng));
  std::uniform_real_distribution<float> u(0.1F, 4.0F);
  for (auto& d : f.depth) d = u(rng);
  f.depth[3] = 0.0F;
  const auto path = scratch("frame.dlsd");
  save_depth(f, path.string());
  const auto back = load_depth(path.string());
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(back.fx == f.fx);
  CHECK(back.cy == f.cy);
  CHECK(back.camera_to_world == f.camera_to_world);
  CHECK(back.depth == f.depth);
  // magic, size, intrinsics, pose, pixels.
  const auto bytes = read_bytes(path);
  CHECK(bytes.size() == 4 + 8 + 16 + 64 + 4 * 35);

  write_bytes(scratch("short.dlsd"), bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_depth(scratch("short.dlsd").string()), FormatError);
  std::string zero = bytes;
  std::fill(zero.begin() + 4, zero.begin() + 12, '\0');
  write_bytes(scratch("zero.dlsd"), zero);
  CHECK_THROWS_AS(load_depth(scratch("zero.dlsd").string()), FormatError);
}

TEST_CASE("checkpoints round-trip bitwise") {
  DecoderConfig dc;
  dc.code_dim = 6;
  dc.hidden_dim = 10;
  dc.num_layers = 3;
  Checkpoint ck;
  ck.decoder = DecoderParams<Real>::init(dc, 5);
  AdamState<Real> opt(ck.decoder.mlp.parameter_count(), AdamConfig{});
  std::vector<Real> params = ck.decoder.mlp.flatten(), grads(params.size(), Real(0.3));
  opt.step(params, grads);
  ck.optimizer = opt;
  LatentGrid grid(Vec3(0.1, 0.2, -0.3), 0.125, dc.code_dim);
  const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(-0.5, 0.2, 0.9)};
  grid.allocate(pts, 4);
  ck.grid = grid;

  const auto path = scratch("model.dls").string();
  save_checkpoint(ck, path);
  const auto back = load_checkpoint(path);
  CHECK(back.decoder.mlp.flatten() == ck.decoder.mlp.flatten());
  CHECK(back.decoder.truncation == ck.decoder.truncation);
  REQUIRE(back.optimizer.has_value());
  CHECK(back.optimizer->step_count() == 1);
  CHECK(back.optimizer->first_moment() == opt.first_moment());
  CHECK(back.optimizer->second_moment() == opt.second_moment());
  REQUIRE(back.grid.has_value());
  CHECK(back.grid->indices() == grid.indices());
  CHECK(back.grid->codes() == grid.codes());
  CHECK(back.grid->voxel_size() == 0.125);
  const auto again = scratch("model2.dls").string();
  save_checkpoint(back, again);
  CHECK(read_bytes(again) == read_bytes(path));

  const std::string bytes = read_bytes(path);
  std::string bad = bytes;
  bad[0] = 'X';
  write_bytes(scratch("magic.dls"), bad);
  CHECK(error_of([&] { load_checkpoint(scratch("magic.dls").string()); }).find("magic") != std::string::npos);
  bad = bytes;
  bad[4] = 7;
  write_bytes(scratch("version.dls"), bad);
  CHECK(error_of([&] { load_checkpoint(scratch("version.dls").string()); }).find("version 7") != std::string::npos);
  write_bytes(scratch("cut.dls"), bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(scratch("cut.dls").string()), FormatError);
}

TEST_CASE("a checkpoint with an empty grid and no optimizer") {
  Checkpoint ck;
  ck.decoder = DecoderParams<Real>::init(DecoderConfig{}, 1);
  ck.grid = LatentGrid(Vec3::Zero(), 0.5, ck.decoder.code_dim);
  const auto path = scratch("empty.dls").string();
  save_checkpoint(ck, path);
  const auto back = load_checkpoint(path);
  CHECK_FALSE(back.optimizer.has_value());
  REQUIRE(back.grid.has_value());
  CHECK(back.grid->empty());
  Checkpoint mismatch = ck;
  mismatch.grid = LatentGrid(Vec3::Zero(), 0.5, ck.decoder.code_dim + 2);
  CHECK_THROWS_AS(save_checkpoint(mismatch, path), ContractError);
}

TEST_CASE("sample CSV round trip and validation") {
  const std::vector<SdfSample> samples{{Vec3(0.1, -2.5, 3.0), -0.0125, 1.0}, {Vec3(1e-7, 0, 5), 0.25, 0.3}};
  const auto path = scratch("samples.csv");
  save_samples(samples, path.string());
  const auto back = load_samples(path.string());
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].position == samples[i].position);
    CHECK(back[i].sdf == samples[i].sdf);
    CHECK(back[i].weight == samples[i].weight);
  }
  write_text(path, "a,b,c\n");
  CHECK_THROWS_AS(load_samples(path.string()), FormatError);
  write_text(path, "x,y,z,sdf,weight\n0,0,0,0.1,0\n");
  CHECK_THROWS_AS(load_samples(path.string()), FormatError);
  write_text(path, "x,y,z,sdf,weight\n0,0,0,0.1\n");
  CHECK_THROWS_AS(load_samples(path.string()), FormatError);
}

TEST_CASE("TSDF volume round trip") {
  TsdfVolume vol(Vec3(-1, 0, 2), 0.2, {3, 4, 2}, 0.6);
  std::vector<float> t(vol.voxel_count()), w(vol.voxel_count());
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = -1.0F + 0.08F * static_cast<float>(i);
    w[i] = static_cast<float>(i % 3);
  }
  vol.assign(t, w);
  const auto path = scratch("vol.dlst").string();
  save_tsdf(vol, path);
  const auto back = load_tsdf(path);
  CHECK(back.dims() == vol.dims());
  CHECK(back.origin() == vol.origin());
  CHECK(back.truncation() == 0.6);
  CHECK(back.tsdf_values() == t);
  CHECK(back.weights() == w);
}
