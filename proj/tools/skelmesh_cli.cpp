// Command-line front end: skeletonize, reconstruct, evaluate, decompose.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <skelmesh/skelmesh.hpp>

namespace fs = std::filesystem;
using namespace skelmesh;

namespace {

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  RunConfig defaults;
  const std::string text = defaults.to_text();
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto eq = text.find('=', pos);
    keys.push_back(text.substr(pos, eq - pos));
    pos = text.find('\n', eq) + 1;
  }
  keys.push_back("seed");
  return keys;
}

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

void skeletonize_one(const std::string& in, const std::string& out, const RunConfig& base) {
  RunConfig config = base;
  config.input = in;
  config.output = out;
  const PointCloud cloud = load_points(in);
  const auto result = skeletonize(cloud.points, config);
  save_skel(result.mesh, out);
}

bool is_point_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".xyz" || ext == ".ply" || ext == ".txt" || ext == ".pts";
}

/// Runs every point file in `dir` on `jobs` workers; returns the failure count.
int skeletonize_dir(const std::string& dir, const std::string& out_dir, const RunConfig& config,
                    std::size_t jobs) {
  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_point_file(entry.path())) inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  fs::create_directories(out_dir);

  std::atomic<std::size_t> next{0};
  std::atomic<int> failures{0};
  std::mutex log;
  auto worker = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      const fs::path out = fs::path(out_dir) / inputs[i].filename().replace_extension(".skel");
      try {
        skeletonize_one(inputs[i].string(), out.string(), config);
      } catch (const std::exception& e) {
        ++failures;
        const std::lock_guard lock(log);
        std::cerr << "skeletonize: " << inputs[i].string() << ": " << e.what() << '\n';
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::max<std::size_t>(jobs, 1); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return failures;
}

std::string format_labels(const DecompositionLabels& labels) {
  std::string out = "P " + std::to_string(labels.part_count()) + '\n';
  for (std::size_t p = 0; p < labels.part_count(); ++p) {
    out += std::to_string(p) + ' ' + to_string(labels.part_kind[p]) + '\n';
  }
  out += "V " + std::to_string(labels.part_of_vertex.size()) + '\n';
  for (std::size_t v = 0; v < labels.part_of_vertex.size(); ++v) {
    out += labels.junction[v] ? std::string("junction") : std::to_string(labels.part_of_vertex[v]);
    out += '\n';
  }
  return out;
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error(path + ": no such file or directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skeletal mesh extraction from point clouds"};
  app.require_subcommand(1);

  // skeletonize
  auto* skel = app.add_subcommand("skeletonize", "point cloud -> SKEL file");
  std::string skel_in, skel_out, config_path;
  std::size_t jobs = 1;
  std::map<std::string, std::string> overrides;
  skel->add_option("input", skel_in, "point file (.xyz/.ply) or directory")->required();
  skel->add_option("-o,--output", skel_out, "SKEL file, or directory when input is one")->required();
  skel->add_option("--config", config_path, "key=value configuration file");
  skel->add_option("--jobs", jobs, "workers for directory input");
  for (const auto& key : config_keys()) {
    if (key == "input" || key == "output") continue;
    skel->add_option_function<std::string>(
        flag_name(key), [&overrides, key](const std::string& v) { overrides[key] = v; },
        "override " + key);
  }

  // reconstruct
  auto* recon = app.add_subcommand("reconstruct", "SKEL file -> envelope samples (.obj/.xyz/.ply)");
  std::string recon_in, recon_out;
  ReconstructionOptions recon_opts;
  recon->add_option("input", recon_in, "SKEL file")->required();
  recon->add_option("-o,--output", recon_out, "output points")->required();
  recon->add_option("--density", recon_opts.density, "samples per sphere");
  recon->add_option("--edge-steps", recon_opts.edge_steps, "interpolation steps per edge");
  recon->add_option("--face-grid", recon_opts.face_grid, "barycentric grid per face");
  recon->add_option("--epsilon", recon_opts.epsilon_fraction, "rejection depth / bbox diagonal");
  recon->add_option("--seed", recon_opts.seed, "spiral phase seed");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "print CD/HD metrics as key=value lines");
  std::string eval_skel, eval_cloud, gt_path, mat_path;
  EvaluationOptions eval_opts;
  eval->add_option("skel", eval_skel, "SKEL file")->required();
  eval->add_option("cloud", eval_cloud, "input point cloud")->required();
  eval->add_option("--gt", gt_path, "ground-truth surface samples");
  eval->add_option("--mat-ref", mat_path, "reference MAT samples");
  eval->add_option("--samples", eval_opts.sample_count, "sample count per side");
  eval->add_option("--seed", eval_opts.seed, "sampling seed");

  // decompose
  auto* dec = app.add_subcommand("decompose", "SKEL file -> curve/sheet part labels");
  std::string dec_in, dec_out;
  dec->add_option("input", dec_in, "SKEL file")->required();
  dec->add_option("-o,--output", dec_out, "labels file (standard output when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*skel) {
      require_file(skel_in);
      RunConfig config;
      if (!config_path.empty()) {
        require_file(config_path);
        config = load_run_config(config_path);
      }
      if (const auto it = overrides.find("seed"); it != overrides.end()) config.set("seed", it->second);
      for (const auto& [k, v] : overrides) {
        if (k != "seed") config.set(k, v);
      }
      if (fs::is_directory(skel_in)) return skeletonize_dir(skel_in, skel_out, config, jobs) == 0 ? 0 : 1;
      skeletonize_one(skel_in, skel_out, config);
    } else if (*recon) {
      require_file(recon_in);
      const auto env = reconstruct_surface(load_skel(recon_in), recon_opts);
      const std::string ext = detail::lowercase_extension(recon_out);
      if (ext == ".obj") {
        export_obj(env, recon_out);
      } else if (ext == ".ply") {
        save_points_ply(env.points, recon_out);
      } else {
        save_points_xyz(env.points, recon_out);
      }
    } else if (*eval) {
      require_file(eval_skel);
      require_file(eval_cloud);
      const SkeletalMesh mesh = load_skel(eval_skel);
      const PointCloud cloud = load_points(eval_cloud);
      std::optional<PointCloud> gt, mat;
      if (!gt_path.empty()) {
        require_file(gt_path);
        gt = load_points(gt_path);
      }
      if (!mat_path.empty()) {
        require_file(mat_path);
        mat = load_points(mat_path);
      }
      eval_opts.mat = mat.has_value();
      const auto report = evaluate(mesh, cloud.points, gt ? &gt->points : nullptr,
                                   mat ? &mat->points : nullptr, eval_opts);
      auto put = [](const char* key, const std::optional<double>& v) {
        if (v) std::printf("%s=%.9g\n", key, *v);
      };
      put("cd_recon", report.cd_recon);
      put("hd_recon", report.hd_recon);
      put("cd_mat", report.cd_mat);
      put("hd_mat", report.hd_mat);
    } else if (*dec) {
      require_file(dec_in);
      const std::string text = format_labels(decompose(load_skel(dec_in)));
      if (dec_out.empty()) {
        std::cout << text;
      } else {
        detail::write_file(dec_out, text);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << app.get_subcommands().front()->get_name() << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
