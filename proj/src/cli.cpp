#include "planeforge/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "planeforge/config.hpp"
#include "planeforge/errors.hpp"
#include "planeforge/evaluate.hpp"
#include "planeforge/formalize.hpp"
#include "planeforge/net.hpp"
#include "planeforge/render.hpp"
#include "planeforge/train.hpp"

namespace pf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// PLANE_FORGE_SEED overrides the config seed when set.
void apply_env_seed(config::RunConfig& cfg) {
  const char* env = std::getenv("PLANE_FORGE_SEED");
  if (!env || !*env) return;
  char* end = nullptr;
  unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0')
    throw ConfigError("PLANE_FORGE_SEED: not a valid integer: '" + std::string(env) + "'");
  cfg.seed = static_cast<std::uint64_t>(v);
}

std::vector<double> parse_csv_doubles(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t next = text.find(',', pos);
    std::string tok = text.substr(pos, next == std::string::npos ? next : next - pos);
    try {
      out.push_back(std::stod(tok));
    } catch (...) {
      throw ConfigError(what + ": cannot parse '" + tok + "' as a number");
    }
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

geom::Lattice parse_lattice_flag(const std::string& text) {
  auto vals = parse_csv_doubles(text, "--lattice");
  if (vals.size() == 4)
    return geom::Lattice(geom::Vec(vals[0], vals[1]), geom::Vec(vals[2], vals[3]));
  if (vals.size() == 9)
    return geom::Lattice(geom::Vec(vals[0], vals[1], vals[2]),
                         geom::Vec(vals[3], vals[4], vals[5]),
                         geom::Vec(vals[6], vals[7], vals[8]));
  throw ConfigError("--lattice: expected 4 (2D) or 9 (3D) comma-separated numbers");
}

// Trains from a config, writing checkpoints/history/summary into out_dir.
net::Network run_training(const config::RunConfig& cfg, const fs::path& out_dir,
                          bool quiet) {
  fs::create_directories(out_dir);
  {
    std::ofstream f(out_dir / "run_config.json");
    f << config::dump_run_config(cfg) << "\n";
  }
  net::Network initial = net::init_network(cfg.architecture(), cfg.seed);
  train::TrainingConfig tc = cfg.training_config();
  train::TrainCallbacks cb;
  cb.on_checkpoint = [&](std::int64_t step, const net::Network& n) {
    net::save_checkpoint(n, (out_dir / ("checkpoint_step" + std::to_string(step + 1) + ".json")).string());
  };
  cb.on_eval = [&](const train::HistoryRecord& r) {
    if (!quiet)
      std::cout << "step " << r.step << " lr " << r.lr << " loss " << r.loss
                << " conflicts " << r.conflict_rate << "\n";
  };
  auto [trained, history] = train::train(initial, tc, RngStream(cfg.seed), &cb);
  net::save_checkpoint(trained, (out_dir / "checkpoint_final.json").string());
  train::write_history_csv(history, (out_dir / "history.csv").string());

  net::NetworkColoring coloring(trained);
  double final_rate = eval::argmax_conflict_rate(coloring, cfg.loss_spec, 1000000,
                                                 RngStream(cfg.seed).substream(2), cfg.workers);
  loss::LossEstimate final_loss =
      loss::estimate_loss(coloring, cfg.loss_spec, RngStream(cfg.seed).substream(3), cfg.workers);
  json summary;
  summary["format_version"] = 1;
  summary["seed"] = cfg.seed;
  summary["steps"] = cfg.steps;
  summary["final_loss"] = final_loss.value;
  summary["final_conflict_rate"] = final_rate;
  {
    std::ofstream f(out_dir / "summary.json");
    f << summary.dump(1) << "\n";
  }
  if (!quiet)
    std::cout << "final loss " << final_loss.value << ", conflict rate " << final_rate << "\n";
  return trained;
}

config::RunConfig sibling_config(const std::string& checkpoint_path) {
  fs::path p = fs::path(checkpoint_path).parent_path() / "run_config.json";
  if (!fs::exists(p))
    throw ConfigError("cannot find run_config.json next to '" + checkpoint_path +
                      "'; pass --config explicitly");
  return config::load_run_config(p.string());
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const NoPeriodicityFound& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "hint: supply a lattice manually with --lattice\n";
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 5;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> owned = args;
  std::vector<char*> argv;
  std::string name = "planeforge";
  argv.push_back(name.data());
  for (auto& a : owned) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Neural discovery of plane colorings avoiding prescribed distances"};
  app.require_subcommand(1);

  // train
  std::string train_config;
  std::string train_out;
  int workers_flag = 0;
  auto* cmd_train = app.add_subcommand("train", "Train a coloring network from a config");
  cmd_train->add_option("--config", train_config, "Run config JSON")->required();
  cmd_train->add_option("--out", train_out, "Output directory (overrides config)");
  cmd_train->add_option("--workers", workers_flag, "Worker threads");

  // formalize
  std::string fm_config, fm_checkpoint, fm_out, fm_lattice;
  int fm_k = 0, fm_l = 0, fm_m = 0, fm_rounds = -1;
  auto* cmd_formalize =
      app.add_subcommand("formalize", "Extract, discretize, repair and certify an almost coloring");
  cmd_formalize->add_option("--config", fm_config, "Run config JSON (trains first)");
  cmd_formalize->add_option("--checkpoint", fm_checkpoint, "Trained checkpoint JSON");
  cmd_formalize->add_option("--out", fm_out, "Output directory");
  cmd_formalize->add_option("--k", fm_k, "Grid resolution along v1");
  cmd_formalize->add_option("--l", fm_l, "Grid resolution along v2");
  cmd_formalize->add_option("--m", fm_m, "Grid resolution along v3 (3D)");
  cmd_formalize->add_option("--rounds", fm_rounds, "Repair rounds");
  cmd_formalize->add_option("--lattice", fm_lattice,
                            "Manual lattice (v1x,v1y,v2x,v2y), skips extraction");

  // verify
  std::string vf_path;
  auto* cmd_verify = app.add_subcommand("verify", "Certify a cell coloring file");
  cmd_verify->add_option("cells", vf_path, "CellColoring JSON")->required();

  // sweep
  std::vector<std::string> sw_checkpoints;
  std::string sw_config, sw_out;
  double sw_min = 0.0, sw_max = 0.0;
  int sw_steps = 0;
  double sw2_min = 0.0, sw2_max = 0.0;
  int sw2_steps = 0;
  std::size_t sw_pairs = 100000;
  auto* cmd_sweep = app.add_subcommand("sweep", "Conflict-rate sweep over distance grids");
  cmd_sweep->add_option("checkpoints", sw_checkpoints, "Checkpoint JSON files")->required();
  cmd_sweep->add_option("--config", sw_config, "Run config JSON (default: sibling)");
  cmd_sweep->add_option("--grid-min", sw_min, "Grid start")->required();
  cmd_sweep->add_option("--grid-max", sw_max, "Grid end")->required();
  cmd_sweep->add_option("--grid-steps", sw_steps, "Grid point count")->required();
  cmd_sweep->add_option("--grid2-min", sw2_min, "Second-axis start");
  cmd_sweep->add_option("--grid2-max", sw2_max, "Second-axis end");
  cmd_sweep->add_option("--grid2-steps", sw2_steps, "Second-axis point count");
  cmd_sweep->add_option("--pairs", sw_pairs, "Samples per grid point");
  cmd_sweep->add_option("--out", sw_out, "Output directory");

  // render
  std::string rd_checkpoint, rd_cells, rd_out = "coloring.png", rd_window, rd_res, rd_at;
  std::string rd_config;
  auto* cmd_render = app.add_subcommand("render", "Rasterize a coloring to PNG");
  cmd_render->add_option("--checkpoint", rd_checkpoint, "Checkpoint JSON");
  cmd_render->add_option("--cells", rd_cells, "CellColoring JSON");
  cmd_render->add_option("--config", rd_config, "Run config JSON (default: sibling)");
  cmd_render->add_option("--window", rd_window, "x0,y0,x1,y1 (default -3,-3,3,3)");
  cmd_render->add_option("--res", rd_res, "WIDTHxHEIGHT (default 1024x1024)");
  cmd_render->add_option("--at", rd_at, "Pin ranged distance parameters, comma separated");
  cmd_render->add_option("--out", rd_out, "Output PNG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (cmd_train->parsed()) {
    return guarded([&]() {
      config::RunConfig cfg = config::load_run_config(train_config);
      apply_env_seed(cfg);
      if (!train_out.empty()) cfg.output_dir = train_out;
      if (workers_flag > 0) cfg.workers = workers_flag;
      run_training(cfg, cfg.output_dir, false);
      return 0;
    });
  }

  if (cmd_formalize->parsed()) {
    return guarded([&]() {
      if (fm_config.empty() && fm_checkpoint.empty())
        throw ConfigError("formalize: need --config or --checkpoint");
      config::RunConfig cfg = fm_config.empty() ? sibling_config(fm_checkpoint)
                                                : config::load_run_config(fm_config);
      apply_env_seed(cfg);
      fs::path out_dir = fm_out.empty() ? fs::path(cfg.output_dir) : fs::path(fm_out);
      fs::create_directories(out_dir);

      net::Network trained = fm_checkpoint.empty()
                                 ? run_training(cfg, out_dir / "train", false)
                                 : net::load_checkpoint(fm_checkpoint);

      formalize::FormalizeParams fp = cfg.formalize_params;
      if (fm_k > 0) fp.resolution[0] = fm_k;
      if (fm_l > 0) fp.resolution[1] = fm_l;
      if (fm_m > 0) fp.resolution[2] = fm_m;
      if (fm_rounds >= 0) fp.repair_rounds = fm_rounds;
      if (!fm_lattice.empty()) {
        fp.manual_lattice = parse_lattice_flag(fm_lattice);
        std::cout << "using manual lattice, skipping periodicity extraction\n";
      }

      config::RunConfig retrain_cfg = cfg;
      retrain_cfg.seed = cfg.seed + 1;
      formalize::PipelineResult res = formalize::formalize_pipeline(
          trained, retrain_cfg.training_config(), fp, RngStream(retrain_cfg.seed));

      formalize::save_cell_coloring(res.coloring, (out_dir / "cell_coloring.json").string());
      formalize::save_report(res.report, (out_dir / "report.json").string());
      net::save_checkpoint(res.periodic_network, (out_dir / "checkpoint_periodic.json").string());

      render::RasterSpec rs;
      rs.palette = render::default_palette(res.coloring.num_regular_colors(), true);
      render::Image img = render::rasterize_cells(res.coloring, rs);
      render::write_png(img, (out_dir / "coloring.png").string());
      render::write_sidecar(rs, "cell_coloring.json", (out_dir / "coloring.json").string());

      char frac[32];
      std::snprintf(frac, sizeof(frac), "%.6g", res.report.bonus_fraction);
      std::cout << "certified: " << (res.report.certified ? "true" : "false")
                << ", bonus_fraction: " << frac
                << ", violations: " << res.report.violations.size() << "\n";
      return res.report.certified ? 0 : 5;
    });
  }

  if (cmd_verify->parsed()) {
    return guarded([&]() {
      formalize::CellColoring cc = formalize::load_cell_coloring(vf_path);
      formalize::VerificationReport rep = formalize::verify(cc);
      char frac[32];
      std::snprintf(frac, sizeof(frac), "%.6g", rep.bonus_fraction);
      std::cout << "certified: " << (rep.certified ? "true" : "false")
                << ", bonus_fraction: " << frac
                << ", violations: " << rep.violations.size() << "\n";
      return rep.certified ? 0 : 1;
    });
  }

  if (cmd_sweep->parsed()) {
    return guarded([&]() {
      if (sw_steps < 1) throw ConfigError("sweep: --grid-steps must be >= 1");
      config::RunConfig cfg = sw_config.empty() ? sibling_config(sw_checkpoints.front())
                                                : config::load_run_config(sw_config);
      apply_env_seed(cfg);
      auto linspace = [](double lo, double hi, int n) {
        std::vector<double> v;
        for (int i = 0; i < n; ++i)
          v.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
        return v;
      };
      std::vector<double> axis1 = linspace(sw_min, sw_max, sw_steps);
      std::vector<double> axis2 =
          sw2_steps > 0 ? linspace(sw2_min, sw2_max, sw2_steps) : std::vector<double>{};

      std::optional<eval::SweepResult> agg;
      std::vector<net::Network> nets;
      for (const auto& path : sw_checkpoints) nets.push_back(net::load_checkpoint(path));
      for (const auto& n : nets) {
        net::NetworkColoring coloring(n);
        eval::SweepResult r = eval::distance_sweep(coloring, cfg.loss_spec, axis1, axis2,
                                                   sw_pairs, RngStream(cfg.seed).substream(7),
                                                   cfg.workers);
        agg = agg ? eval::sweep_min(*agg, r) : r;
      }
      fs::path out_dir = sw_out.empty() ? fs::path(cfg.output_dir) : fs::path(sw_out);
      fs::create_directories(out_dir);
      eval::write_sweep_csv(*agg, (out_dir / "sweep.csv").string());
      render::Image img = render::render_heatmap(*agg, std::max<int>(256, sw_steps),
                                                 axis2.empty() ? 64 : 256);
      render::write_png(img, (out_dir / "sweep.png").string());
      json meta;
      meta["axis1"] = agg->axis1;
      meta["axis2"] = agg->axis2;
      meta["samples_per_point"] = agg->samples_per_point;
      meta["checkpoints"] = sw_checkpoints;
      std::ofstream mf(out_dir / "sweep_meta.json");
      mf << meta.dump(1) << "\n";
      double best = *std::min_element(agg->rates.begin(), agg->rates.end());
      std::cout << "sweep written to " << (out_dir / "sweep.csv").string()
                << ", min rate " << best << "\n";
      return 0;
    });
  }

  if (cmd_render->parsed()) {
    return guarded([&]() {
      if (rd_checkpoint.empty() == rd_cells.empty())
        throw ConfigError("render: need exactly one of --checkpoint or --cells");
      render::RasterSpec rs;
      if (!rd_window.empty()) {
        auto w = parse_csv_doubles(rd_window, "--window");
        if (w.size() != 4) throw ConfigError("--window: expected x0,y0,x1,y1");
        rs.x0 = w[0];
        rs.y0 = w[1];
        rs.x1 = w[2];
        rs.y1 = w[3];
      }
      if (!rd_res.empty()) {
        auto xpos = rd_res.find('x');
        if (xpos == std::string::npos) throw ConfigError("--res: expected WIDTHxHEIGHT");
        try {
          rs.width = std::stoi(rd_res.substr(0, xpos));
          rs.height = std::stoi(rd_res.substr(xpos + 1));
        } catch (...) {
          throw ConfigError("--res: expected WIDTHxHEIGHT");
        }
        if (rs.width < 1 || rs.height < 1) throw ConfigError("--res: must be >= 1x1");
      }

      render::Image img;
      std::string source;
      if (!rd_cells.empty()) {
        formalize::CellColoring cc = formalize::load_cell_coloring(rd_cells);
        rs.palette = render::default_palette(cc.num_regular_colors(), true);
        img = render::rasterize_cells(cc, rs);
        source = render::file_hash_hex(rd_cells);
      } else {
        net::Network n = net::load_checkpoint(rd_checkpoint);
        bool bonus = false;
        if (!rd_config.empty()) {
          config::RunConfig cfg = config::load_run_config(rd_config);
          bonus = cfg.loss_spec.variant == loss::Variant::Lagrangian;
        } else {
          fs::path sib = fs::path(rd_checkpoint).parent_path() / "run_config.json";
          if (fs::exists(sib))
            bonus = config::load_run_config(sib.string()).loss_spec.variant ==
                    loss::Variant::Lagrangian;
        }
        net::NetworkColoring coloring(n);
        rs.palette = render::default_palette(
            bonus ? coloring.num_colors() - 1 : coloring.num_colors(), bonus);
        if (n.architecture.input_dim > n.architecture.spatial_dim) {
          std::vector<double> at;
          if (!rd_at.empty()) at = parse_csv_doubles(rd_at, "--at");
          int extra = n.architecture.input_dim - n.architecture.spatial_dim;
          if (static_cast<int>(at.size()) != extra)
            throw ConfigError("--at: network has " + std::to_string(extra) +
                              " distance channels; pass that many values");
          // Values are passed through as channel inputs (already rescaled by
          // the caller when a config is not available).
          eval::PinnedColoring pinned(coloring, at);
          img = render::rasterize_coloring(pinned, rs, bonus);
        } else {
          img = render::rasterize_coloring(coloring, rs, bonus);
        }
        source = render::file_hash_hex(rd_checkpoint);
      }
      render::write_png(img, rd_out);
      render::write_sidecar(rs, source, rd_out + ".json");
      std::cout << "wrote " << rd_out << "\n";
      return 0;
    });
  }

  return 2;
}

}  // namespace pf::cli
