// onebev: panorama stitching, dataset statistics, and the desk-scale BEV model.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "onebev/dataset_stats.hpp"
#include "onebev/errors.hpp"
#include "onebev/gradient_suite.hpp"
#include "onebev/image_io.hpp"
#include "onebev/labels.hpp"
#include "onebev/metrics.hpp"
#include "onebev/mvt.hpp"
#include "onebev/rig.hpp"
#include "onebev/stitcher.hpp"
#include "onebev/synthetic.hpp"
#include "onebev/train.hpp"

namespace fs = std::filesystem;
using namespace onebev;

namespace {

// One line that reproduces the run: the subcommand and every option value,
// defaults included.
void print_effective_config(const CLI::App& sub) {
  std::ostringstream line;
  line << "effective config: " << sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt == sub.get_help_ptr() || opt->get_name() == "--flags-file") continue;
    std::string value;
    if (opt->get_type_size() == 0) {
      value = opt->count() > 0 ? "true" : "false";
    } else if (opt->count() > 0) {
      value = opt->as<std::string>();
    } else {
      value = opt->get_default_str();
      if (value.empty()) value = "<unset>";
    }
    line << ' ' << opt->get_name() << '=' << value;
  }
  std::cout << line.str() << std::endl;
}

AngularGrid make_grid(int width, int height, double vfov_deg) {
  AngularGrid g;
  g.width = width;
  g.height = height;
  g.v_half_fov = deg2rad(vfov_deg / 2.0);
  g.validate();
  return g;
}

OverlapPolicy parse_overlap(const std::string& s) {
  if (s == "nearest") return OverlapPolicy::Nearest;
  if (s == "order") return OverlapPolicy::Order;
  throw ValidationError("unknown overlap policy '" + s + "' (nearest or order)");
}

struct GridFlags {
  int width = 9600;
  int height = 600;
  double vfov_deg = 50.0;
  std::string overlap = "nearest";

  void add_to(CLI::App* sub) {
    sub->add_option("--width", width, "Panorama width in pixels")->capture_default_str();
    sub->add_option("--height", height, "Panorama height in pixels")->capture_default_str();
    sub->add_option("--vfov-deg", vfov_deg, "Total vertical field of view of the panorama")->capture_default_str();
    sub->add_option("--overlap", overlap, "Overlap policy: nearest or order")->capture_default_str();
  }
  RemapOptions options(int jobs) const { return {make_grid(width, height, vfov_deg), parse_overlap(overlap), jobs}; }
};

ClassTable merged_table(const ClassTable& table) {
  ClassTable out;
  for (const auto& e : table.entries)
    if (!e.merged_into) out.entries.push_back({e.index, e.name, std::nullopt});
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"onebev: 360-degree panorama stitching and BEV segmentation tools"};
  app.require_subcommand(1);
  app.set_config("--flags-file", "", "TOML/INI file supplying flag values; the command line overrides it");

  int jobs = 1;
  auto add_jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs", jobs, "Worker threads; outputs do not depend on it")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  };

  // remap-build
  auto* remap_cmd = app.add_subcommand("remap-build", "Precompute the panorama remap table for a rig");
  std::string rig_path, out_path;
  GridFlags remap_grid;
  remap_cmd->add_option("--rig", rig_path, "Rig JSON file")->required();
  remap_cmd->add_option("--out", out_path, "Output remap table (.obrm)")->required();
  remap_grid.add_to(remap_cmd);
  add_jobs(remap_cmd);

  // stitch
  auto* stitch_cmd = app.add_subcommand("stitch", "Stitch camera images into an equirectangular panorama");
  std::string stitch_rig, stitch_remap, images_dir, stitch_out;
  GridFlags stitch_grid;
  auto* rig_opt = stitch_cmd->add_option("--rig", stitch_rig, "Rig JSON file; images are <camera name>.png");
  auto* remap_opt = stitch_cmd->add_option("--remap", stitch_remap, "Precomputed remap table; images are <order_index>.png");
  rig_opt->excludes(remap_opt);
  stitch_cmd->add_option("--images", images_dir, "Directory of camera images")->required();
  stitch_cmd->add_option("--out", stitch_out, "Output panorama PNG")->required();
  stitch_grid.add_to(stitch_cmd);
  add_jobs(stitch_cmd);

  // render-synthetic
  auto* render_cmd = app.add_subcommand("render-synthetic", "Render camera views of a smooth textured sphere");
  std::string render_rig, render_out, render_pano;
  GridFlags render_grid;
  render_cmd->add_option("--rig", render_rig, "Rig JSON file")->required();
  render_cmd->add_option("--out", render_out, "Output directory for <camera name>.png")->required();
  render_cmd->add_option("--panorama", render_pano, "Also write the exact equirectangular image here");
  render_grid.add_to(render_cmd);
  add_jobs(render_cmd);

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Per-class pixel and presence ratios of a label set");
  std::string labels_dir, classes_path, stats_out;
  bool merge = false;
  std::uint64_t min_pixels = 2;
  stats_cmd->add_option("--labels", labels_dir, "Directory of single-channel label PNGs")->required();
  stats_cmd->add_option("--classes", classes_path, "Class table JSON")->required();
  stats_cmd->add_option("--out", stats_out, "Output CSV")->required();
  stats_cmd->add_flag("--merge", merge, "Fold merged classes into their targets first");
  stats_cmd->add_option("--min-pixels", min_pixels, "Pixels needed for a class to count as present")
      ->capture_default_str();
  add_jobs(stats_cmd);

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference checks of every differentiable operation");
  std::string grad_config;
  std::uint64_t grad_seed = 0;
  double grad_eps = 1e-5;
  grad_cmd->add_option("--config", grad_config, "Model config JSON for additional composite checks");
  grad_cmd->add_option("--seed", grad_seed, "Random seed")->capture_default_str();
  grad_cmd->add_option("--eps", grad_eps, "Central-difference step")->capture_default_str();

  // train-toy
  auto* train_cmd = app.add_subcommand("train-toy", "Overfit the model on a small synthetic set");
  std::string train_config, train_out;
  std::size_t steps = 500, samples = 8, warmup = 25, log_every = 50;
  std::uint64_t train_seed = 0;
  double lr = 5e-3, weight_decay = 0.01;
  train_cmd->add_option("--config", train_config, "Model config JSON (defaults to the built-in toy config)");
  train_cmd->add_option("--steps", steps, "Optimizer steps")->capture_default_str();
  train_cmd->add_option("--samples", samples, "Synthetic samples")->capture_default_str();
  train_cmd->add_option("--seed", train_seed, "Seed for the data and the model")->capture_default_str();
  train_cmd->add_option("--lr", lr, "Peak learning rate")->capture_default_str();
  train_cmd->add_option("--warmup", warmup, "Warm-up steps")->capture_default_str();
  train_cmd->add_option("--weight-decay", weight_decay, "Decoupled weight decay")->capture_default_str();
  train_cmd->add_option("--log-every", log_every, "Print the loss every N steps")->capture_default_str();
  train_cmd->add_option("--out-dir", train_out, "Write losses.csv and a checkpoint here");

  // forward
  auto* fwd_cmd = app.add_subcommand("forward", "Run the model once and report shapes and parameter counts");
  std::string fwd_config, fwd_checkpoint, fwd_image, fwd_out;
  std::uint64_t fwd_seed = 0;
  fwd_cmd->add_option("--config", fwd_config, "Model config JSON (defaults to the built-in toy config)");
  fwd_cmd->add_option("--checkpoint", fwd_checkpoint, "Checkpoint stem written by train-toy");
  fwd_cmd->add_option("--image", fwd_image, "Panorama PNG; a random image is used when omitted");
  fwd_cmd->add_option("--seed", fwd_seed, "Seed for the random input")->capture_default_str();
  fwd_cmd->add_option("--out", fwd_out, "Write the logits tensor here");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Per-class IoU and mIoU of predicted label maps");
  std::string pred_dir, gt_dir, eval_classes, eval_out;
  eval_cmd->add_option("--pred", pred_dir, "Directory of predicted label PNGs")->required();
  eval_cmd->add_option("--gt", gt_dir, "Directory of ground-truth label PNGs")->required();
  eval_cmd->add_option("--classes", eval_classes, "Class table JSON")->required();
  eval_cmd->add_option("--out", eval_out, "Output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*remap_cmd) {
      print_effective_config(*remap_cmd);
      const Rig rig = load_rig(rig_path);
      const RemapTable table = build_remap_table(rig, remap_grid.options(jobs));
      save_remap(out_path, table);
      std::cout << "remap table " << table.height << "x" << table.width << ", invalid entries "
                << table.invalid_count() << "\n";
    } else if (*stitch_cmd) {
      print_effective_config(*stitch_cmd);
      require(!stitch_rig.empty() || !stitch_remap.empty(), "stitch: one of --rig or --remap is required");
      std::map<int, Image> images;
      RemapTable table;
      if (!stitch_rig.empty()) {
        const Rig rig = load_rig(stitch_rig);
        for (const auto& cam : rig.cameras) {
          const fs::path p = fs::path(images_dir) / (cam.name + ".png");
          if (!fs::exists(p)) throw IoError("missing image for camera " + cam.name + ": " + p.string());
          images.emplace(cam.order_index, read_png_rgb(p));
        }
        check_images(rig, images);
        table = build_remap_table(rig, stitch_grid.options(jobs));
      } else {
        table = load_remap(stitch_remap);
        std::set<int> ids;
        for (const auto& e : table.entries)
          if (e.valid()) ids.insert(e.camera_id);
        for (const int id : ids) {
          const fs::path p = fs::path(images_dir) / (std::to_string(id) + ".png");
          if (!fs::exists(p)) throw IoError("missing image for camera " + std::to_string(id) + ": " + p.string());
          images.emplace(id, read_png_rgb(p));
        }
      }
      const Image pano = stitch(images, table, jobs);
      write_png(stitch_out, pano);
      std::cout << "panorama " << pano.height << "x" << pano.width << ", unfilled pixels " << table.invalid_count()
                << "\n";
    } else if (*render_cmd) {
      print_effective_config(*render_cmd);
      const Rig rig = load_rig(render_rig);
      fs::create_directories(render_out);
      for (const auto& cam : rig.cameras) {
        const fs::path p = fs::path(render_out) / (cam.name + ".png");
        write_png(p, render_camera_view(cam, jobs));
        std::cout << "wrote " << p.string() << "\n";
      }
      if (!render_pano.empty()) {
        write_png(render_pano, render_equirect(render_grid.options(jobs).grid, jobs));
        std::cout << "wrote " << render_pano << "\n";
      }
    } else if (*stats_cmd) {
      print_effective_config(*stats_cmd);
      ClassTable table = load_class_table(classes_path);
      std::vector<LabelRaster> frames;
      for (const auto& p : list_label_files(labels_dir)) frames.push_back(read_label_png(p));
      require(!frames.empty(), "stats: no label PNGs in " + labels_dir);
      if (merge) {
        for (auto& f : frames) {
          f.check_against(table);
          f = apply_class_merges(f, table);
        }
        table = merged_table(table);
      }
      const auto stats = class_stats(frames, table, min_pixels, jobs);
      const std::string csv = stats_csv(stats);
      write_text(stats_out, csv);
      std::cout << "frames " << frames.size() << "\n" << csv;
    } else if (*grad_cmd) {
      print_effective_config(*grad_cmd);
      auto checks = run_gradient_suite(grad_seed, grad_eps);
      if (!grad_config.empty()) {
        for (auto& c : model_gradient_checks(load_mvt_config(grad_config), grad_seed, grad_eps)) {
          c.name = "config/" + c.name;
          checks.push_back(std::move(c));
        }
      }
      std::size_t failed = 0;
      for (const auto& c : checks) {
        const bool ok = c.result.max_rel_error <= kGradTolerance;
        failed += ok ? 0 : 1;
        std::cout << (ok ? "PASS " : "FAIL ") << c.name << " max_rel_error=" << std::scientific
                  << std::setprecision(3) << c.result.max_rel_error << " checked=" << c.result.checked << "\n";
      }
      std::cout << checks.size() - failed << "/" << checks.size() << " checks within " << kGradTolerance << "\n";
      return failed == 0 ? 0 : 1;
    } else if (*train_cmd) {
      print_effective_config(*train_cmd);
      MvtConfig cfg = train_config.empty() ? MvtConfig::toy() : load_mvt_config(train_config);
      cfg.seed = train_seed;
      MvtModel model = MvtModel::init(cfg);
      const auto data = make_toy_dataset(cfg, samples, train_seed);
      TrainOptions opts;
      opts.steps = steps;
      opts.schedule = {lr, warmup, steps, 0.0};
      opts.weight_decay = weight_decay;
      const TrainReport report = train_toy(model, data, opts);
      for (std::size_t i = 0; i < report.losses.size(); ++i) {
        if (i % std::max<std::size_t>(log_every, 1) == 0 || i + 1 == report.losses.size())
          std::cout << "step " << i << " lr " << std::setprecision(6) << opts.schedule.at(i) << " loss "
                    << std::setprecision(8) << report.losses[i] << "\n";
      }
      std::cout << "final mIoU " << std::setprecision(6) << report.final_miou << "\n";
      if (!train_out.empty()) {
        std::ostringstream csv;
        csv << "step,lr,loss\n" << std::setprecision(17);
        for (std::size_t i = 0; i < report.losses.size(); ++i)
          csv << i << ',' << opts.schedule.at(i) << ',' << report.losses[i] << '\n';
        write_text(fs::path(train_out) / "losses.csv", csv.str());
        save_checkpoint(model, fs::path(train_out) / "model");
        std::cout << "wrote " << (fs::path(train_out) / "losses.csv").string() << " and checkpoint "
                  << (fs::path(train_out) / "model").string() << "\n";
      }
    } else if (*fwd_cmd) {
      print_effective_config(*fwd_cmd);
      MvtModel model = !fwd_checkpoint.empty() ? load_checkpoint(fwd_checkpoint)
                                               : MvtModel::init(fwd_config.empty() ? MvtConfig::toy()
                                                                                   : load_mvt_config(fwd_config));
      const MvtConfig& cfg = model.cfg;
      Tensor image;
      if (!fwd_image.empty()) {
        const Image png = read_png_rgb(fwd_image);
        require(cfg.input_channels == 3, "forward: PNG input needs input_channels = 3");
        image = Tensor({static_cast<std::size_t>(png.height), static_cast<std::size_t>(png.width), 3});
        for (std::size_t i = 0; i < png.pixels.size(); ++i) image[i] = png.pixels[i] / 255.0;
      } else {
        std::mt19937_64 rng(fwd_seed);
        const std::size_t s = cfg.feature_stride();
        image = Tensor::uniform({cfg.query_h * s, cfg.query_w * s * 8, cfg.input_channels}, rng, 0.0, 1.0);
      }
      const NoGradGuard no_grad;
      const Tensor logits = forward(model, Var::constant(image)).value();
      std::cout << "input " << shape_str(image.shape()) << " logits " << shape_str(logits.shape()) << "\n"
                << "parameters " << model.parameter_count() << " (mvt stack " << model.mvt_parameter_count() << ")\n";
      if (!fwd_out.empty()) save_tensor(fwd_out, logits);
    } else if (*eval_cmd) {
      print_effective_config(*eval_cmd);
      const ClassTable table = load_class_table(eval_classes);
      std::vector<int> ids;
      for (const auto& e : table.entries) ids.push_back(e.index);
      ConfusionAccumulator acc(ids);
      const auto gt_files = list_label_files(gt_dir);
      require(!gt_files.empty(), "eval: no label PNGs in " + gt_dir);
      for (const auto& g : gt_files) {
        const fs::path p = fs::path(pred_dir) / g.filename();
        if (!fs::exists(p)) throw IoError("missing prediction " + p.string());
        const LabelRaster gt = read_label_png(g);
        gt.check_against(table);
        acc.add(read_label_png(p), gt);
      }
      const std::string csv = iou_csv(acc, table);
      if (!eval_out.empty()) write_text(eval_out, csv);
      std::cout << "frames " << gt_files.size() << "\n" << csv;
    }
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
