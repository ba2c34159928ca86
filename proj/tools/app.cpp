#include "app.hpp"

#include "deepls/demo2d.hpp"
#include "deepls/fusion.hpp"
#include "deepls/inference.hpp"
#include "deepls/io.hpp"
#include "deepls/meshing.hpp"
#include "deepls/metrics.hpp"
#include "deepls/parallel.hpp"
#include "deepls/pipeline.hpp"
#include "deepls/scenes.hpp"
#include "deepls/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

namespace deepls::app {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

constexpr const char* kToolName = "deepls";
constexpr const char* kToolVersion = "0.1.0";

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string hex_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

std::string lower_extension(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

// Reproducibility record written beside every run's outputs.
class Manifest {
 public:
  Manifest(const std::string& subcommand, const std::vector<std::string>& args) {
    doc_["tool"] = kToolName;
    doc_["version"] = kToolVersion;
    doc_["subcommand"] = subcommand;
    doc_["argv"] = args;
    doc_["cwd"] = fs::current_path().string();
    doc_["config"] = json::object();
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::object();
    doc_["results"] = json::object();
    doc_["timings"] = json::object();
  }

  json& config() { return doc_["config"]; }
  void input(const std::string& name, const json& value) { doc_["inputs"][name] = value; }
  void output(const std::string& name, const std::string& path) { doc_["outputs"][name] = path; }
  void result(const std::string& name, double value) {
    doc_["results"][name] = {{"value", value}, {"hex", hex_float(value)}};
  }
  void result_count(const std::string& name, std::uint64_t value) { doc_["results"][name] = {{"value", value}}; }
  void timing(const std::string& name, double seconds) { doc_["timings"][name] = seconds; }
  void set_seed(std::uint64_t seed, int threads) {
    doc_["seed"] = seed;
    doc_["threads"] = threads;
  }

  void write(const std::string& path) {
    output("manifest", path);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest " + path);
    out << doc_.dump(2) << '\n';
    if (!out) throw DataError("failed writing manifest " + path);
  }

 private:
  json doc_;
};

std::string manifest_path_for(const std::string& explicit_path, const std::string& primary_output) {
  if (!explicit_path.empty()) return explicit_path;
  return primary_output + ".manifest.json";
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// Points used for extraction masks: surface samples (sdf == 0) from CSV,
// valid depth pixels, or mesh vertices.
std::vector<Vec3> load_observed_points(const std::vector<std::string>& paths) {
  std::vector<Vec3> points;
  for (const auto& path : paths) {
    const std::string ext = lower_extension(path);
    if (ext == ".csv") {
      const auto samples = load_samples(path);
      std::size_t before = points.size();
      for (const auto& s : samples)
        if (s.sdf == 0.0) points.push_back(s.position);
      if (points.size() == before)
        for (const auto& s : samples) points.push_back(s.position);
    } else if (ext == ".dlsd") {
      const DepthFrame frame = load_depth(path);
      for (int v = 0; v < frame.height; ++v)
        for (int u = 0; u < frame.width; ++u)
          if (frame.at(u, v) > 0.0F) points.push_back(frame.backproject(u, v, frame.at(u, v)));
    } else {
      const TriangleMesh mesh = load_mesh(path);
      points.insert(points.end(), mesh.vertices.begin(), mesh.vertices.end());
    }
  }
  return points;
}

json decoder_json(const DecoderParams<Real>& d) {
  return {{"dim", d.dim},
          {"code_dim", d.code_dim},
          {"hidden_dim", d.spec().hidden_dim},
          {"num_layers", d.spec().num_layers},
          {"truncation_voxels", d.truncation}};
}

// ---------------------------------------------------------------- train-prior

struct TrainOptions {
  int primitives = 200;
  double min_size = 1.5;
  double max_size = 6.0;
  std::uint64_t seed = 1;
  long steps = 20000;
  int batch_voxels = 32;
  int samples_per_voxel = 64;
  double lr = 0.01;
  double code_lr = 0.01;
  double reg = 1e-4;
  double receptive_factor = kDefaultReceptiveFactor;
  int max_patches_per_shape = 40;
  double surface_density = 24.0;
  double uniform_density = 2.0;
  int code_dim = 125;
  int hidden_dim = 128;
  int layers = 4;
  double truncation = 2.0;
  int threads = 1;
  std::string output;
  std::string loss_csv;
  std::string manifest;
  bool quiet = false;
};

int cmd_train(const TrainOptions& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto start = Clock::now();
  CorpusConfig corpus;
  corpus.count = o.primitives;
  corpus.min_size = o.min_size;
  corpus.max_size = o.max_size;
  corpus.seed = o.seed;
  PatchSamplerConfig sampler;
  sampler.receptive_factor = o.receptive_factor;
  sampler.truncation_voxels = o.truncation;
  sampler.max_patches_per_shape = o.max_patches_per_shape;
  sampler.surface_density = o.surface_density;
  sampler.uniform_density = o.uniform_density;
  sampler.seed = mix_seed(o.seed, 0x5a3bULL);
  DecoderConfig dc;
  dc.code_dim = o.code_dim;
  dc.hidden_dim = o.hidden_dim;
  dc.num_layers = o.layers;
  dc.truncation = o.truncation;
  TrainConfig tc;
  tc.steps = o.steps;
  tc.batch_voxels = o.batch_voxels;
  tc.samples_per_voxel = o.samples_per_voxel;
  tc.lr = o.lr;
  tc.code_lr = o.code_lr;
  tc.reg_weight = o.reg;
  tc.seed = o.seed;
  tc.threads = o.threads;
  corpus.validate();
  sampler.validate();
  tc.validate();

  const auto shapes = generate_primitive_corpus(corpus);
  const PatchDataset dataset = build_patch_dataset(shapes, sampler);
  const double t_data = seconds_since(start);
  if (!o.quiet)
    out << "dataset: " << dataset.size() << " patches, " << dataset.total_samples() << " samples ("
        << std::fixed << std::setprecision(1) << t_data << " s)\n";
  const auto t_train_start = Clock::now();
  long last_report = -1;
  const TrainResult result = train_prior(dataset, dc, tc, [&](long step, long total, double loss) {
    if (o.quiet) return;
    if (step == total || step - last_report >= std::max(1L, total / 20)) {
      last_report = step;
      out << "step " << step << "/" << total << "  epoch loss " << std::setprecision(6) << loss << '\n';
    }
  });
  const double t_train = seconds_since(t_train_start);

  ensure_parent(o.output);
  Checkpoint ck;
  ck.decoder = result.decoder;
  ck.optimizer = result.optimizer;
  save_checkpoint(ck, o.output);
  const std::string loss_path = o.loss_csv.empty() ? o.output + ".loss.csv" : o.loss_csv;
  write_loss_csv(loss_path, result);
  const double final_loss = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
  out << "trained " << o.steps << " steps in " << std::fixed << std::setprecision(1) << t_train
      << " s; final epoch loss " << std::setprecision(6) << final_loss << '\n';

  Manifest m("train-prior", args);
  m.set_seed(o.seed, o.threads);
  m.config() = {{"primitives", o.primitives},
                {"min_size", o.min_size},
                {"max_size", o.max_size},
                {"steps", o.steps},
                {"batch_voxels", o.batch_voxels},
                {"samples_per_voxel", o.samples_per_voxel},
                {"lr", o.lr},
                {"code_lr", o.code_lr},
                {"reg_weight", o.reg},
                {"receptive_factor", o.receptive_factor},
                {"max_patches_per_shape", o.max_patches_per_shape},
                {"surface_density", o.surface_density},
                {"uniform_density", o.uniform_density},
                {"decay_fractions", {tc.decay_fractions[0], tc.decay_fractions[1]}},
                {"decay_factor", tc.decay_factor},
                {"decoder", decoder_json(result.decoder)}};
  m.output("checkpoint", o.output);
  m.output("loss_csv", loss_path);
  m.result("final_epoch_loss", final_loss);
  m.result_count("patches", dataset.size());
  m.timing("dataset", t_data);
  m.timing("train", t_train);
  m.timing("total", seconds_since(start));
  m.write(manifest_path_for(o.manifest, o.output));
  return kExitOk;
}

// --------------------------------------------------------------------- encode

struct EncodeOptions {
  std::string checkpoint;
  std::string samples;
  std::string mesh;
  std::vector<std::string> depth;
  double voxel_size = 0.0;
  double receptive_factor = kDefaultReceptiveFactor;
  double band = 0.5;
  int dilation = 0;
  double surface_density = 24.0;
  double uniform_density = 2.0;
  double displacement = 0.015;
  double depth_truncation = 0.1;
  double free_space_step = 0.05;
  int free_space_per_ray = 2;
  int stride = 1;
  double z_ref = 1.0;
  int iterations = 300;
  double lr = 0.01;
  double reg = 1e-4;
  double tol = 1e-4;
  bool no_early_exit = false;
  int max_samples = 64;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string output;
  std::string report;
  std::string save_samples_path;
  std::string eval_gt;
  std::size_t probes = 20000;
  double probe_sigma = 0.25;
  double probe_band = 0.5;
  std::uint64_t probe_seed = 5;
  std::string manifest;
};

int cmd_encode(const EncodeOptions& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto start = Clock::now();
  const int sources = (!o.samples.empty() ? 1 : 0) + (!o.mesh.empty() ? 1 : 0) + (!o.depth.empty() ? 1 : 0);
  if (sources != 1) throw ConfigError("give exactly one of --samples, --mesh or --depth");
  if (!(o.voxel_size > 0.0)) throw ConfigError("--voxel-size must be positive");

  Checkpoint ck = load_checkpoint(o.checkpoint);
  const DecoderParams<Real>& decoder = ck.decoder;
  if (decoder.dim != 3) throw ConfigError("checkpoint holds a planar decoder; scenes need a 3D one");

  Manifest m("encode", args);
  m.set_seed(o.seed, o.threads);
  m.input("checkpoint", o.checkpoint);
  std::vector<SdfSample> samples;
  if (!o.samples.empty()) {
    samples = load_samples(o.samples);
    m.input("samples", o.samples);
  } else if (!o.mesh.empty()) {
    const TriangleMesh mesh = load_mesh(o.mesh);
    const MeshDistance distance(mesh);
    VoxelSamplingConfig vs;
    vs.voxel_size = o.voxel_size;
    vs.surface_density = o.surface_density;
    vs.uniform_density = o.uniform_density;
    vs.truncation_voxels = decoder.truncation;
    vs.seed = mix_seed(o.seed, 0x5a3bULL);
    samples = sample_mesh_scene(mesh, distance, vs);
    m.input("mesh", o.mesh);
  } else {
    DepthSampleConfig ds;
    ds.displacement = o.displacement;
    ds.truncation = o.depth_truncation;
    ds.free_space_step = o.free_space_step;
    ds.free_space_per_ray = o.free_space_per_ray;
    ds.pixel_stride = o.stride;
    ds.z_ref = o.z_ref;
    ds.validate();
    for (const auto& path : o.depth) {
      const auto part = samples_from_depth(load_depth(path), ds);
      samples.insert(samples.end(), part.begin(), part.end());
    }
    m.input("depth", o.depth);
  }
  if (samples.empty()) throw DataError("no samples to encode");
  if (!o.save_samples_path.empty()) {
    ensure_parent(o.save_samples_path);
    save_samples(samples, o.save_samples_path);
    m.output("samples", o.save_samples_path);
  }

  GridSetup gs;
  gs.voxel_size = o.voxel_size;
  gs.receptive_factor = o.receptive_factor;
  gs.allocation_band = o.band;
  gs.dilation = o.dilation;
  gs.code_dim = decoder.code_dim;
  gs.seed = o.seed;
  LatentGrid grid = allocate_grid(samples, gs);
  // Samples outside the decoder truncation carry no more information.
  const double trunc = decoder.truncation * o.voxel_size;
  for (auto& s : samples) s.sdf = std::clamp(s.sdf, -trunc, trunc);

  EncodeConfig ec;
  ec.iterations = o.iterations;
  ec.lr = o.lr;
  ec.reg_weight = o.reg;
  ec.convergence_tol = o.tol;
  ec.early_exit = !o.no_early_exit;
  ec.max_samples = o.max_samples;
  ec.seed = o.seed;
  ec.threads = o.threads;
  const EncodeReport report = encode_scene(decoder, grid, samples, ec);
  out << "encoded " << grid.size() << " voxels from " << samples.size() << " samples in " << std::fixed
      << std::setprecision(2) << report.seconds << " s\n"
      << std::setprecision(6) << "mean loss " << report.mean_loss() << ", mean tanh residual "
      << report.mean_tanh_residual() << ", empty voxels " << report.empty_count() << '\n';

  ensure_parent(o.output);
  Checkpoint result;
  result.decoder = decoder;
  result.grid = grid;
  save_checkpoint(result, o.output);
  m.output("grid", o.output);
  if (!o.report.empty()) {
    std::ofstream csv(o.report);
    if (!csv) throw DataError("cannot write " + o.report);
    csv << std::setprecision(9) << "i,j,k,samples,iterations,loss,mean_tanh_residual,empty\n";
    for (std::size_t s = 0; s < grid.size(); ++s) {
      const auto& idx = grid.indices()[s];
      csv << idx.i << ',' << idx.j << ',' << idx.k << ',' << report.sample_count[s] << ','
          << report.iterations_run[s] << ',' << report.final_loss[s] << ',' << report.mean_residual[s] << ','
          << static_cast<int>(report.empty[s]) << '\n';
    }
    m.output("report", o.report);
  }

  m.config() = {{"voxel_size", o.voxel_size},
                {"receptive_factor", o.receptive_factor},
                {"allocation_band_voxels", o.band},
                {"dilation", o.dilation},
                {"iterations", o.iterations},
                {"lr", o.lr},
                {"reg_weight", o.reg},
                {"convergence_tol", o.tol},
                {"early_exit", ec.early_exit},
                {"window", ec.window},
                {"max_samples", o.max_samples},
                {"decoder", decoder_json(decoder)}};
  m.result_count("voxels", grid.size());
  m.result_count("samples", samples.size());
  m.result("mean_loss", report.mean_loss());
  m.result("mean_tanh_residual", report.mean_tanh_residual());
  m.result_count("empty_voxels", report.empty_count());
  m.timing("encode", report.seconds);

  if (!o.eval_gt.empty()) {
    const TriangleMesh gt = load_mesh(o.eval_gt);
    const MeshDistance distance(gt);
    const ProbeSet probes = near_surface_probes(gt, distance, o.probes, o.probe_sigma * o.voxel_size,
                                                o.probe_band * o.voxel_size, o.probe_seed);
    const RmseReport rmse = grid_rmse(decoder, grid, probes, gt.bounds().diagonal());
    out << "near-surface RMSE " << std::setprecision(6) << rmse.rmse << " (" << std::setprecision(4)
        << 100.0 * rmse.relative << "% of diagonal, " << rmse.used << " probes, coverage "
        << std::setprecision(3) << rmse.coverage << ")\n";
    m.input("eval_gt", o.eval_gt);
    m.config()["probes"] = {{"count", o.probes},
                            {"sigma_voxels", o.probe_sigma},
                            {"band_voxels", o.probe_band},
                            {"seed", o.probe_seed}};
    m.result("rmse", rmse.rmse);
    m.result("rmse_relative", rmse.relative);
    m.result("probe_coverage", rmse.coverage);
  }
  m.timing("total", seconds_since(start));
  m.write(manifest_path_for(o.manifest, o.output));
  return kExitOk;
}

// ---------------------------------------------------------------- reconstruct

struct ReconstructOptions {
  std::string grid;
  std::string tsdf;
  double resolution = 0.0;
  double mask_radius = std::numeric_limits<double>::infinity();
  std::vector<std::string> observations;
  double min_weight = 0.0;
  std::string output;
  std::string manifest;
};

int cmd_reconstruct(const ReconstructOptions& o, const std::vector<std::string>& args, std::ostream& out,
                    std::ostream& err) {
  const auto start = Clock::now();
  if (o.grid.empty() == o.tsdf.empty()) throw ConfigError("give exactly one of --grid or --tsdf");
  if (std::isfinite(o.mask_radius) && o.observations.empty())
    throw ConfigError("a finite --mask-radius needs --observations");
  Manifest m("reconstruct", args);
  ExtractionConfig ec;
  ec.mask_radius = o.mask_radius;
  std::vector<Vec3> observed;
  std::optional<PointIndex> index;
  if (!o.observations.empty()) {
    observed = load_observed_points(o.observations);
    if (observed.empty()) throw DataError("observation files hold no points");
    index.emplace(observed);
    m.input("observations", o.observations);
  }
  ExtractionStats stats;
  TriangleMesh mesh;
  if (!o.grid.empty()) {
    const Checkpoint ck = load_checkpoint(o.grid);
    if (!ck.grid) throw DataError(o.grid + " holds no encoded grid");
    check_compatible(ck.decoder, *ck.grid);
    ec.resolution = o.resolution > 0.0 ? o.resolution : 0.25 * ck.grid->voxel_size();
    mesh = extract(grid_source(ck.decoder, *ck.grid), ck.grid->bounds(), ec, index ? &*index : nullptr, &stats);
    m.input("grid", o.grid);
  } else {
    const TsdfVolume volume = load_tsdf(o.tsdf);
    ec.resolution = o.resolution > 0.0 ? o.resolution : volume.voxel_size();
    mesh = extract(volume.source(o.min_weight), volume.bounds(), ec, index ? &*index : nullptr, &stats);
    m.input("tsdf", o.tsdf);
  }
  ensure_parent(o.output);
  save_mesh(mesh, o.output);
  if (mesh.empty()) err << "warning: extracted mesh is empty\n";
  out << "mesh: " << mesh.vertices.size() << " vertices, " << mesh.triangles.size() << " triangles; cells with "
      << "crossing " << stats.cells_with_crossing << ", masked " << stats.cells_masked << ", unavailable "
      << stats.cells_unavailable << '\n';
  m.config() = {{"resolution", ec.resolution},
                {"mask_radius", std::isfinite(o.mask_radius) ? json(o.mask_radius) : json("inf")},
                {"min_weight", o.min_weight}};
  m.output("mesh", o.output);
  m.result_count("vertices", mesh.vertices.size());
  m.result_count("triangles", mesh.triangles.size());
  m.result_count("cells_masked", stats.cells_masked);
  m.result_count("cells_emitted", stats.cells_emitted);
  m.timing("total", seconds_since(start));
  m.write(manifest_path_for(o.manifest, o.output));
  return kExitOk;
}

// ----------------------------------------------------------------------- fuse

struct FuseOptions {
  std::vector<std::string> depth;
  double voxel_size = 0.0;
  double truncation = 0.0;
  std::vector<double> bounds;
  double z_ref = 1.0;
  double max_weight = 0.0;
  double min_weight = 0.0;
  double resolution = 0.0;
  double mask_radius = std::numeric_limits<double>::infinity();
  std::string output;
  std::string tsdf_out;
  std::string manifest;
};

int cmd_fuse(const FuseOptions& o, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  if (!(o.voxel_size > 0.0)) throw ConfigError("--voxel-size must be positive");
  const double trunc = o.truncation > 0.0 ? o.truncation : 3.0 * o.voxel_size;
  std::vector<DepthFrame> frames;
  for (const auto& path : o.depth) frames.push_back(load_depth(path));
  Aabb region;
  if (!o.bounds.empty()) {
    if (o.bounds.size() != 6) throw ConfigError("--bounds takes xmin ymin zmin xmax ymax zmax");
    region.lo = Vec3(o.bounds[0], o.bounds[1], o.bounds[2]);
    region.hi = Vec3(o.bounds[3], o.bounds[4], o.bounds[5]);
    if (region.empty()) throw ConfigError("--bounds is empty");
  } else {
    for (const auto& f : frames)
      for (int v = 0; v < f.height; ++v)
        for (int u = 0; u < f.width; ++u)
          if (f.at(u, v) > 0.0F) region.extend(f.backproject(u, v, f.at(u, v)));
    if (region.empty()) throw DataError("depth frames hold no valid pixels");
    region = region.padded(trunc);
  }
  TsdfVolume volume = TsdfVolume::covering(region, o.voxel_size, trunc);
  FusionConfig fc;
  fc.z_ref = o.z_ref;
  fc.max_weight = o.max_weight;
  fc.min_weight = o.min_weight;
  for (const auto& f : frames) volume.integrate(f, fc);
  ExtractionConfig ec;
  ec.resolution = o.resolution > 0.0 ? o.resolution : o.voxel_size;
  ec.mask_radius = o.mask_radius;
  std::optional<PointIndex> index;
  if (std::isfinite(o.mask_radius)) index.emplace(load_observed_points(o.depth));
  ExtractionStats stats;
  const TriangleMesh mesh = extract(volume.source(o.min_weight), volume.bounds(), ec, index ? &*index : nullptr, &stats);
  ensure_parent(o.output);
  save_mesh(mesh, o.output);
  if (mesh.empty()) err << "warning: extracted mesh is empty\n";
  out << "fused " << frames.size() << " frames into " << volume.dims()[0] << "x" << volume.dims()[1] << "x"
      << volume.dims()[2] << " voxels; mesh " << mesh.vertices.size() << " vertices, " << mesh.triangles.size()
      << " triangles\n";
  Manifest m("fuse", args);
  m.input("depth", o.depth);
  m.config() = {{"voxel_size", o.voxel_size},
                {"truncation", trunc},
                {"bounds", {region.lo.x(), region.lo.y(), region.lo.z(), region.hi.x(), region.hi.y(), region.hi.z()}},
                {"z_ref", o.z_ref},
                {"max_weight", o.max_weight},
                {"min_weight", o.min_weight},
                {"resolution", ec.resolution},
                {"mask_radius", std::isfinite(o.mask_radius) ? json(o.mask_radius) : json("inf")}};
  m.output("mesh", o.output);
  if (!o.tsdf_out.empty()) {
    ensure_parent(o.tsdf_out);
    save_tsdf(volume, o.tsdf_out);
    m.output("tsdf", o.tsdf_out);
  }
  m.result_count("vertices", mesh.vertices.size());
  m.result_count("triangles", mesh.triangles.size());
  m.timing("total", seconds_since(start));
  m.write(manifest_path_for(o.manifest, o.output));
  return kExitOk;
}

// ----------------------------------------------------------------------- eval

struct EvalOptions {
  std::string pred;
  std::string gt;
  std::size_t points = 20000;
  std::uint64_t seed = 0;
  double completion_threshold = 0.007;
  std::string chamfer = "squared";
  std::string output;
  std::string manifest;
};

int cmd_eval(const EvalOptions& o, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  const ChamferConvention convention = chamfer_convention_from_string(o.chamfer);
  if (!(o.completion_threshold > 0.0)) throw ConfigError("--completion-threshold must be positive");
  if (o.points == 0) throw ConfigError("--points must be positive");
  const TriangleMesh pred = load_mesh(o.pred);
  const TriangleMesh gt = load_mesh(o.gt);
  if (gt.triangles.empty()) throw DataError("ground-truth mesh is empty");
  std::mt19937_64 rng(o.seed);
  const auto gt_points = sample_surface(gt, o.points, rng);
  std::vector<Vec3> pred_points;
  if (!pred.triangles.empty()) pred_points = sample_surface(pred, o.points, rng);
  const EvalReport r = evaluate_points(pred_points, gt_points, o.completion_threshold, convention);

  std::ostringstream row;
  row << std::setprecision(12);
  if (r.chamfer_valid) {
    row << r.chamfer;
  } else {
    row << "nan";
  }
  row << ',' << to_string(r.convention) << ',' << r.accuracy_p90 << ',' << r.completion << ','
      << r.completion_threshold << ',' << r.pred_points << ',' << r.gt_points << ','
      << (r.chamfer_valid ? "ok" : "empty_prediction") << '\n';
  const std::string header =
      "chamfer,chamfer_convention,accuracy_p90,completion,completion_threshold,pred_points,gt_points,status\n";
  if (!o.output.empty()) {
    ensure_parent(o.output);
    std::ofstream csv(o.output);
    if (!csv) throw DataError("cannot write " + o.output);
    csv << header << row.str();
  } else {
    out << header << row.str();
  }
  if (r.chamfer_valid) {
    out << "chamfer (" << to_string(r.convention) << ") x1e3: " << std::setprecision(6) << 1e3 * r.chamfer
        << "\naccuracy p90: " << r.accuracy_p90 << "\ncompletion @" << r.completion_threshold << ": "
        << r.completion << '\n';
  }
  Manifest m("eval", args);
  m.set_seed(o.seed, 1);
  m.input("pred", o.pred);
  m.input("gt", o.gt);
  m.config() = {{"points", o.points},
                {"completion_threshold", o.completion_threshold},
                {"chamfer", to_string(convention)}};
  if (r.chamfer_valid) m.result("chamfer", r.chamfer);
  m.result("accuracy_p90", r.accuracy_p90);
  m.result("completion", r.completion);
  m.timing("total", seconds_since(start));
  std::string manifest = o.manifest;
  if (manifest.empty() && !o.output.empty()) manifest = o.output + ".manifest.json";
  if (!o.output.empty()) m.output("report", o.output);
  if (!manifest.empty()) m.write(manifest);
  if (!r.chamfer_valid) {
    err << "error: predicted mesh is empty; chamfer is undefined (completion 0)\n";
    return kExitData;
  }
  return kExitOk;
}

// --------------------------------------------------------------------- demo2d

struct Demo2DOptions {
  std::uint64_t seed = 3;
  long steps = 3000;
  int train_scenes = 6;
  double cell_size = 8.0;
  int shapes = 3;
  double test_noise = 0.0;
  std::vector<double> radii = {1.0, 1.25, 1.5, 1.75, 2.0};
  int threads = 1;
  std::string output;
  std::string manifest;
};

int cmd_demo2d(const Demo2DOptions& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto start = Clock::now();
  Demo2DConfig c;
  c.seed = o.seed;
  c.train.steps = o.steps;
  c.train.seed = o.seed;
  c.train.threads = o.threads;
  c.encode.threads = o.threads;
  c.train_scenes = o.train_scenes;
  c.cell_size = o.cell_size;
  c.scene.shapes = o.shapes;
  c.test_noise = o.test_noise;
  c.radii = o.radii;
  const Demo2DResult result = run_demo2d(c, [&](const Demo2DRow& row) {
    out << "radius " << std::fixed << std::setprecision(2) << row.radius << ": test error " << std::setprecision(4)
        << row.test_error << " px, border error " << row.border_error << " px\n";
  });
  fs::create_directories(o.output);
  const std::string csv = (fs::path(o.output) / "demo2d.csv").string();
  write_demo2d_csv(csv, result);
  const int w = static_cast<int>(std::ceil(c.scene.width));
  const int h = static_cast<int>(std::ceil(c.scene.height));
  std::vector<double> truth(static_cast<std::size_t>(w * h));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) truth[static_cast<std::size_t>(y * w + x)] = result.test_scene.sdf(Vec2(x + 0.5, y + 0.5));
  save_pgm((fs::path(o.output) / "truth.pgm").string(), render_contour(truth, w, h, c.cell_size * 2.0), w, h);
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    std::ostringstream name;
    name << "contour_r" << std::fixed << std::setprecision(2) << result.rows[i].radius << ".pgm";
    save_pgm((fs::path(o.output) / name.str()).string(), render_contour(result.predicted[i], w, h, c.cell_size * 2.0),
             w, h);
  }
  out << "critical point (non-monotone error over the sweep): " << (result.non_monotone ? "yes" : "no") << '\n';
  Manifest m("demo2d", args);
  m.set_seed(o.seed, o.threads);
  m.config() = {{"steps", o.steps},   {"train_scenes", o.train_scenes}, {"cell_size", o.cell_size},
                {"shapes", o.shapes}, {"test_noise", o.test_noise},     {"radii", o.radii},
                {"train_samples_per_cell", c.train_samples_per_cell},
                {"test_samples_per_cell", c.test_samples_per_cell}};
  m.output("directory", o.output);
  for (const auto& row : result.rows) {
    std::ostringstream key;
    key << "test_error_r" << std::fixed << std::setprecision(2) << row.radius;
    m.result(key.str(), row.test_error);
  }
  m.timing("total", seconds_since(start));
  m.write(o.manifest.empty() ? (fs::path(o.output) / "manifest.json").string() : o.manifest);
  return kExitOk;
}

// ------------------------------------------------------------------- generate

struct GenerateOptions {
  // blob
  int lobes = 5;
  double extent = 1.0;
  double smoothness = 0.15;
  int lattice = 96;
  // primitive
  std::string kind = "sphere";
  std::vector<double> size = {0.5, 0.5, 0.5};
  double step = 0.01;
  // scans / samples
  std::string mesh;
  std::string rig = "orbit";
  int views = 8;
  double distance = 2.5;
  double elevation = 0.35;
  int width = 64;
  int height = 48;
  double fx = 60.0;
  double noise = 0.0;
  double voxel_size = 0.05;
  double surface_density = 24.0;
  double uniform_density = 2.0;
  std::uint64_t seed = 7;
  std::string output;
  std::string manifest;
};

PrimitiveKind primitive_kind_from_string(const std::string& s) {
  if (s == "sphere") return PrimitiveKind::sphere;
  if (s == "box") return PrimitiveKind::box;
  if (s == "ellipsoid") return PrimitiveKind::ellipsoid;
  if (s == "cylinder") return PrimitiveKind::cylinder;
  throw ConfigError("unknown primitive kind '" + s + "'");
}

int cmd_generate(const std::string& what, const GenerateOptions& o, const std::vector<std::string>& args,
                 std::ostream& out) {
  const auto start = Clock::now();
  Manifest m("generate " + what, args);
  m.set_seed(o.seed, 1);
  if (what == "blob") {
    BlobConfig bc;
    bc.lobes = o.lobes;
    bc.extent = o.extent;
    bc.smoothness = o.smoothness;
    bc.lattice = o.lattice;
    bc.seed = o.seed;
    const TriangleMesh mesh = make_blob_mesh(bc);
    ensure_parent(o.output);
    save_mesh(mesh, o.output);
    out << "blob: " << mesh.vertices.size() << " vertices, " << mesh.triangles.size() << " triangles\n";
    m.config() = {{"lobes", o.lobes}, {"extent", o.extent}, {"smoothness", o.smoothness}, {"lattice", o.lattice}};
    m.output("mesh", o.output);
  } else if (what == "primitive") {
    if (o.size.size() != 3) throw ConfigError("--size takes three values");
    PrimitiveShape s;
    s.kind = primitive_kind_from_string(o.kind);
    s.size = Vec3(o.size[0], o.size[1], o.size[2]);
    s.validate();
    if (!(o.step > 0.0)) throw ConfigError("--step must be positive");
    const std::vector<PrimitiveShape> scene{s};
    const TriangleMesh mesh = primitive_mesh(scene, o.step);
    ensure_parent(o.output);
    save_mesh(mesh, o.output);
    out << o.kind << ": " << mesh.vertices.size() << " vertices, " << mesh.triangles.size() << " triangles\n";
    m.config() = {{"kind", o.kind}, {"size", o.size}, {"step", o.step}};
    m.output("mesh", o.output);
  } else if (what == "scans") {
    const TriangleMesh mesh = load_mesh(o.mesh);
    const MeshDistance distance(mesh);
    CameraIntrinsics k;
    k.width = o.width;
    k.height = o.height;
    k.fx = o.fx;
    k.fy = o.fx;
    k.cx = 0.5 * o.width;
    k.cy = 0.5 * o.height;
    k.validate();
    fs::create_directories(o.output);
    std::vector<RigidTransform> poses;
    if (o.rig == "orbit") {
      poses = orbit_cameras(mesh.bounds().center(), o.distance, o.views, o.elevation);
    } else if (o.rig == "corners") {
      poses = corner_cameras(mesh.bounds().center(), o.distance);
    } else {
      throw ConfigError("unknown camera rig '" + o.rig + "'");
    }
    std::vector<std::string> paths;
    for (std::size_t i = 0; i < poses.size(); ++i) {
      DepthFrame frame = render_depth(distance, k, poses[i]);
      if (o.noise > 0.0) add_depth_noise(frame, o.noise, mix_seed(o.seed, i));
      std::ostringstream name;
      name << "frame_" << std::setw(3) << std::setfill('0') << i << ".dlsd";
      const std::string path = (fs::path(o.output) / name.str()).string();
      save_depth(frame, path);
      paths.push_back(path);
    }
    out << "wrote " << paths.size() << " depth frames to " << o.output << '\n';
    m.input("mesh", o.mesh);
    m.config() = {{"rig", o.rig}, {"views", poses.size()}, {"distance", o.distance}, {"elevation", o.elevation}, {"width", o.width},
                  {"height", o.height}, {"fx", o.fx},             {"noise", o.noise}};
    m.output("directory", o.output);
  } else if (what == "samples") {
    const TriangleMesh mesh = load_mesh(o.mesh);
    const MeshDistance distance(mesh);
    VoxelSamplingConfig vs;
    vs.voxel_size = o.voxel_size;
    vs.surface_density = o.surface_density;
    vs.uniform_density = o.uniform_density;
    vs.seed = o.seed;
    const auto samples = sample_mesh_scene(mesh, distance, vs);
    ensure_parent(o.output);
    save_samples(samples, o.output);
    out << "wrote " << samples.size() << " samples\n";
    m.input("mesh", o.mesh);
    m.config() = {{"voxel_size", o.voxel_size},
                  {"surface_density", o.surface_density},
                  {"uniform_density", o.uniform_density}};
    m.output("samples", o.output);
  }
  m.timing("total", seconds_since(start));
  const std::string manifest =
      !o.manifest.empty() ? o.manifest
      : (what == "scans") ? (fs::path(o.output) / "manifest.json").string()
                          : o.output + ".manifest.json";
  m.write(manifest);
  return kExitOk;
}

// --------------------------------------------------------------------- replay

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_file_contents(const fs::path& a, const fs::path& b) { return read_bytes(a) == read_bytes(b); }

int cmd_replay(const std::string& manifest_path, const std::string& out_dir_flag, std::ostream& out, std::ostream& err);

// -------------------------------------------------------------------- parsing

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local implicit shape priors: training, encoding, meshing and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  TrainOptions train;
  auto* c_train = app.add_subcommand("train-prior", "Train a decoder on patches of random primitives");
  c_train->add_option("--primitives", train.primitives, "Number of primitives in the corpus")->capture_default_str();
  c_train->add_option("--min-size", train.min_size, "Smallest primitive size, voxel units")->capture_default_str();
  c_train->add_option("--max-size", train.max_size, "Largest primitive size, voxel units")->capture_default_str();
  c_train->add_option("--seed", train.seed)->capture_default_str();
  c_train->add_option("--steps", train.steps)->capture_default_str();
  c_train->add_option("--batch-voxels", train.batch_voxels)->capture_default_str();
  c_train->add_option("--samples-per-voxel", train.samples_per_voxel)->capture_default_str();
  c_train->add_option("--lr", train.lr, "Decoder learning rate")->capture_default_str();
  c_train->add_option("--code-lr", train.code_lr)->capture_default_str();
  c_train->add_option("--reg", train.reg, "Code regularizer weight")->capture_default_str();
  c_train->add_option("--receptive-factor", train.receptive_factor)->capture_default_str();
  c_train->add_option("--max-patches-per-shape", train.max_patches_per_shape, "0 keeps every patch")
      ->capture_default_str();
  c_train->add_option("--surface-density", train.surface_density)->capture_default_str();
  c_train->add_option("--uniform-density", train.uniform_density)->capture_default_str();
  c_train->add_option("--code-dim", train.code_dim)->capture_default_str();
  c_train->add_option("--hidden-dim", train.hidden_dim)->capture_default_str();
  c_train->add_option("--layers", train.layers)->capture_default_str();
  c_train->add_option("--truncation", train.truncation, "Truncation, voxel units")->capture_default_str();
  c_train->add_option("--threads", train.threads)->capture_default_str();
  c_train->add_option("-o,--output", train.output, "Checkpoint path")->required();
  c_train->add_option("--loss-csv", train.loss_csv, "Default: <output>.loss.csv");
  c_train->add_option("--manifest", train.manifest, "Default: <output>.manifest.json");
  c_train->add_flag("--quiet", train.quiet);

  EncodeOptions enc;
  auto* c_enc = app.add_subcommand("encode", "Infer local codes for a scene with a frozen decoder");
  c_enc->add_option("--checkpoint", enc.checkpoint)->required()->check(CLI::ExistingFile);
  c_enc->add_option("--samples", enc.samples, "CSV samples x,y,z,sdf,weight")->check(CLI::ExistingFile);
  c_enc->add_option("--mesh", enc.mesh, "Mesh to sample")->check(CLI::ExistingFile);
  c_enc->add_option("--depth", enc.depth, "Depth frames")->check(CLI::ExistingFile);
  c_enc->add_option("--voxel-size", enc.voxel_size)->required();
  c_enc->add_option("--receptive-factor", enc.receptive_factor)->capture_default_str();
  c_enc->add_option("--band", enc.band, "Allocation band, voxel units")->capture_default_str();
  c_enc->add_option("--dilation", enc.dilation)->capture_default_str();
  c_enc->add_option("--surface-density", enc.surface_density)->capture_default_str();
  c_enc->add_option("--uniform-density", enc.uniform_density)->capture_default_str();
  c_enc->add_option("--displacement", enc.displacement)->capture_default_str();
  c_enc->add_option("--depth-truncation", enc.depth_truncation)->capture_default_str();
  c_enc->add_option("--free-space-step", enc.free_space_step)->capture_default_str();
  c_enc->add_option("--free-space-per-ray", enc.free_space_per_ray)->capture_default_str();
  c_enc->add_option("--stride", enc.stride)->capture_default_str();
  c_enc->add_option("--z-ref", enc.z_ref)->capture_default_str();
  c_enc->add_option("--iterations", enc.iterations)->capture_default_str();
  c_enc->add_option("--lr", enc.lr)->capture_default_str();
  c_enc->add_option("--reg", enc.reg)->capture_default_str();
  c_enc->add_option("--tol", enc.tol)->capture_default_str();
  c_enc->add_flag("--no-early-exit", enc.no_early_exit);
  c_enc->add_option("--max-samples", enc.max_samples, "Per-iteration minibatch, 0 = all")->capture_default_str();
  c_enc->add_option("--seed", enc.seed)->capture_default_str();
  c_enc->add_option("--threads", enc.threads)->capture_default_str();
  c_enc->add_option("-o,--output", enc.output, "Encoded grid (checkpoint with grid)")->required();
  c_enc->add_option("--report", enc.report, "Per-voxel CSV");
  c_enc->add_option("--save-samples", enc.save_samples_path, "Write the samples used");
  c_enc->add_option("--eval-gt", enc.eval_gt, "Ground-truth mesh for near-surface RMSE")->check(CLI::ExistingFile);
  c_enc->add_option("--probes", enc.probes)->capture_default_str();
  c_enc->add_option("--probe-sigma", enc.probe_sigma, "Voxel units")->capture_default_str();
  c_enc->add_option("--probe-band", enc.probe_band, "Voxel units")->capture_default_str();
  c_enc->add_option("--probe-seed", enc.probe_seed)->capture_default_str();
  c_enc->add_option("--manifest", enc.manifest);

  ReconstructOptions rec;
  auto* c_rec = app.add_subcommand("reconstruct", "Extract a mesh from an encoded grid or TSDF volume");
  c_rec->add_option("--grid", rec.grid)->check(CLI::ExistingFile);
  c_rec->add_option("--tsdf", rec.tsdf)->check(CLI::ExistingFile);
  c_rec->add_option("--resolution", rec.resolution, "Default: voxel/4 for grids, voxel for volumes");
  c_rec->add_option("--mask-radius", rec.mask_radius, "Distance to observations beyond which cells are dropped");
  c_rec->add_option("--observations", rec.observations, "CSV samples, depth frames or meshes")
      ->check(CLI::ExistingFile);
  c_rec->add_option("--min-weight", rec.min_weight)->capture_default_str();
  c_rec->add_option("-o,--output", rec.output, "Mesh (.obj or .ply)")->required();
  c_rec->add_option("--manifest", rec.manifest);

  FuseOptions fuse;
  auto* c_fuse = app.add_subcommand("fuse", "Fuse depth frames into a TSDF volume and mesh it");
  c_fuse->add_option("--depth", fuse.depth)->required()->check(CLI::ExistingFile);
  c_fuse->add_option("--voxel-size", fuse.voxel_size)->required();
  c_fuse->add_option("--truncation", fuse.truncation, "Default: 3 voxels");
  c_fuse->add_option("--bounds", fuse.bounds, "xmin ymin zmin xmax ymax zmax")->expected(6);
  c_fuse->add_option("--z-ref", fuse.z_ref)->capture_default_str();
  c_fuse->add_option("--max-weight", fuse.max_weight)->capture_default_str();
  c_fuse->add_option("--min-weight", fuse.min_weight)->capture_default_str();
  c_fuse->add_option("--resolution", fuse.resolution, "Default: voxel size");
  c_fuse->add_option("--mask-radius", fuse.mask_radius);
  c_fuse->add_option("-o,--output", fuse.output)->required();
  c_fuse->add_option("--tsdf-out", fuse.tsdf_out);
  c_fuse->add_option("--manifest", fuse.manifest);

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "Chamfer, accuracy and completion between two meshes");
  c_eval->add_option("--pred", ev.pred)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--gt", ev.gt)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--points", ev.points)->capture_default_str();
  c_eval->add_option("--seed", ev.seed)->capture_default_str();
  c_eval->add_option("--completion-threshold", ev.completion_threshold, "Scene units (7 mm in meters)")
      ->capture_default_str();
  c_eval->add_option("--chamfer", ev.chamfer, "squared or linear")->capture_default_str();
  c_eval->add_option("-o,--output", ev.output, "Report CSV (default: stdout)");
  c_eval->add_option("--manifest", ev.manifest);

  Demo2DOptions d2;
  auto* c_d2 = app.add_subcommand("demo2d", "Planar receptive-field sweep");
  c_d2->add_option("--seed", d2.seed)->capture_default_str();
  c_d2->add_option("--steps", d2.steps)->capture_default_str();
  c_d2->add_option("--train-scenes", d2.train_scenes)->capture_default_str();
  c_d2->add_option("--cell-size", d2.cell_size, "Pixels")->capture_default_str();
  c_d2->add_option("--shapes", d2.shapes)->capture_default_str();
  c_d2->add_option("--test-noise", d2.test_noise, "Pixels")->capture_default_str();
  c_d2->add_option("--radii", d2.radii)->capture_default_str();
  c_d2->add_option("--threads", d2.threads)->capture_default_str();
  c_d2->add_option("-o,--output", d2.output, "Output directory")->required();
  c_d2->add_option("--manifest", d2.manifest);

  GenerateOptions gen;
  auto* c_gen = app.add_subcommand("generate", "Synthetic inputs: blobs, primitives, depth scans, samples");
  c_gen->require_subcommand(1);
  auto* g_blob = c_gen->add_subcommand("blob", "Smooth union of random ellipsoids");
  g_blob->add_option("--lobes", gen.lobes)->capture_default_str();
  g_blob->add_option("--extent", gen.extent)->capture_default_str();
  g_blob->add_option("--smoothness", gen.smoothness)->capture_default_str();
  g_blob->add_option("--lattice", gen.lattice)->capture_default_str();
  g_blob->add_option("--seed", gen.seed)->capture_default_str();
  g_blob->add_option("-o,--output", gen.output)->required();
  g_blob->add_option("--manifest", gen.manifest);
  auto* g_prim = c_gen->add_subcommand("primitive", "Tessellated primitive centered at the origin");
  g_prim->add_option("--kind", gen.kind, "sphere, box, ellipsoid or cylinder")->capture_default_str();
  g_prim->add_option("--size", gen.size)->expected(3)->capture_default_str();
  g_prim->add_option("--step", gen.step)->capture_default_str();
  g_prim->add_option("-o,--output", gen.output)->required();
  g_prim->add_option("--manifest", gen.manifest);
  auto* g_scans = c_gen->add_subcommand("scans", "Depth frames from cameras orbiting a mesh");
  g_scans->add_option("--mesh", gen.mesh)->required()->check(CLI::ExistingFile);
  g_scans->add_option("--rig", gen.rig, "orbit (ring of --views) or corners (8 cube-corner views)")
      ->capture_default_str();
  g_scans->add_option("--views", gen.views)->capture_default_str();
  g_scans->add_option("--distance", gen.distance)->capture_default_str();
  g_scans->add_option("--elevation", gen.elevation, "Radians")->capture_default_str();
  g_scans->add_option("--width", gen.width)->capture_default_str();
  g_scans->add_option("--height", gen.height)->capture_default_str();
  g_scans->add_option("--fx", gen.fx)->capture_default_str();
  g_scans->add_option("--noise", gen.noise, "Depth noise sigma")->capture_default_str();
  g_scans->add_option("--seed", gen.seed)->capture_default_str();
  g_scans->add_option("-o,--output", gen.output, "Output directory")->required();
  g_scans->add_option("--manifest", gen.manifest);
  auto* g_samples = c_gen->add_subcommand("samples", "SDF samples around a mesh");
  g_samples->add_option("--mesh", gen.mesh)->required()->check(CLI::ExistingFile);
  g_samples->add_option("--voxel-size", gen.voxel_size)->capture_default_str();
  g_samples->add_option("--surface-density", gen.surface_density)->capture_default_str();
  g_samples->add_option("--uniform-density", gen.uniform_density)->capture_default_str();
  g_samples->add_option("--seed", gen.seed)->capture_default_str();
  g_samples->add_option("-o,--output", gen.output)->required();
  g_samples->add_option("--manifest", gen.manifest);

  std::string replay_manifest;
  std::string replay_dir;
  auto* c_replay = app.add_subcommand("replay", "Re-run a manifest and check results and outputs match");
  c_replay->add_option("manifest", replay_manifest)->required()->check(CLI::ExistingFile);
  c_replay->add_option("--out-dir", replay_dir, "Default: <manifest dir>/replay");

  std::vector<std::string> argv_storage{kToolName};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (c_train->parsed()) return cmd_train(train, args, out);
  if (c_enc->parsed()) return cmd_encode(enc, args, out);
  if (c_rec->parsed()) return cmd_reconstruct(rec, args, out, err);
  if (c_fuse->parsed()) return cmd_fuse(fuse, args, out, err);
  if (c_eval->parsed()) return cmd_eval(ev, args, out, err);
  if (c_d2->parsed()) return cmd_demo2d(d2, args, out);
  if (c_gen->parsed()) {
    for (auto* sub : {g_blob, g_prim, g_scans, g_samples})
      if (sub->parsed()) return cmd_generate(sub->get_name(), gen, args, out);
  }
  if (c_replay->parsed()) return cmd_replay(replay_manifest, replay_dir, out, err);
  return kExitUsage;
}

int cmd_replay(const std::string& manifest_path, const std::string& out_dir_flag, std::ostream& out,
               std::ostream& err) {
  json doc;
  {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot read " + manifest_path);
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw FormatError(manifest_path + ": " + e.what());
    }
  }
  if (doc.value("tool", "") != kToolName || !doc.contains("argv") || !doc.contains("outputs"))
    throw FormatError(manifest_path + " is not a run manifest");
  if (doc["subcommand"] == "replay") throw ConfigError("cannot replay a replay");
  const fs::path out_dir = fs::absolute(out_dir_flag.empty() ? fs::path(manifest_path).parent_path() / "replay"
                                                             : fs::path(out_dir_flag));
  fs::create_directories(out_dir);
  const fs::path cwd = doc.value("cwd", fs::current_path().string());

  // Redirect every recorded output into the replay directory.
  std::map<std::string, fs::path> remap;
  std::map<std::string, std::pair<fs::path, fs::path>> compare;
  for (const auto& [name, value] : doc["outputs"].items()) {
    const std::string original = value.get<std::string>();
    const fs::path target = out_dir / fs::path(original).filename();
    remap[original] = target;
    compare[name] = {fs::absolute(cwd / original), target};
  }
  std::vector<std::string> args = doc["argv"].get<std::vector<std::string>>();
  bool has_manifest_flag = false;
  for (auto& a : args) {
    if (a == "--manifest") has_manifest_flag = true;
    if (auto it = remap.find(a); it != remap.end()) a = it->second.string();
  }
  const fs::path new_manifest = compare.count("manifest") ? compare["manifest"].second : out_dir / "manifest.json";
  if (!has_manifest_flag) {
    // The default manifest location follows the primary output; pin it.
    const std::string sub = doc["subcommand"].get<std::string>();
    if (sub.rfind("generate", 0) == 0) {
      args.insert(args.begin() + 2, {"--manifest", new_manifest.string()});
    } else {
      args.insert(args.begin() + 1, {"--manifest", new_manifest.string()});
    }
  }

  const fs::path previous = fs::current_path();
  fs::current_path(cwd);
  int code = kExitOk;
  try {
    code = dispatch(args, out, err);
  } catch (...) {
    fs::current_path(previous);
    throw;
  }
  fs::current_path(previous);
  if (code != kExitOk) {
    err << "replayed run exited with code " << code << '\n';
    return code;
  }

  json replayed;
  {
    std::ifstream in(new_manifest);
    if (!in) throw DataError("replayed run wrote no manifest at " + new_manifest.string());
    in >> replayed;
  }
  bool ok = true;
  for (const auto& [name, value] : doc["results"].items()) {
    if (!replayed["results"].contains(name)) {
      out << "result " << name << ": missing\n";
      ok = false;
      continue;
    }
    const bool same = replayed["results"][name] == value;
    out << "result " << name << ": " << (same ? "identical" : "DIFFERS") << '\n';
    ok = ok && same;
  }
  for (const auto& [name, paths] : compare) {
    if (name == "manifest") continue;
    const auto& [a, b] = paths;
    bool same = true;
    if (fs::is_directory(a)) {
      for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
        const fs::path other = b / fs::relative(entry.path(), a);
        same = same && fs::exists(other) && same_file_contents(entry.path(), other);
      }
    } else if (fs::exists(a)) {
      same = fs::exists(b) && same_file_contents(a, b);
    } else {
      out << "output " << name << ": original missing, skipped\n";
      continue;
    }
    out << "output " << name << ": " << (same ? "identical" : "DIFFERS") << '\n';
    ok = ok && same;
  }
  out << (ok ? "replay reproduced the run\n" : "replay did NOT reproduce the run\n");
  return ok ? kExitOk : kExitData;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const json::exception& e) {
    err << "error: malformed manifest: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace deepls::app
