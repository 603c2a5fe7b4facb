#include "planeforge/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "planeforge/errors.hpp"

namespace pf::config {

using nlohmann::json;

net::NetworkArchitecture RunConfig::architecture() const {
  net::NetworkArchitecture arch;
  arch.input_dim = loss_spec.expected_input_dim();
  arch.spatial_dim = loss_spec.dimension;
  arch.hidden_widths = hidden_widths;
  arch.num_colors =
      loss_spec.num_colors + (loss_spec.variant == loss::Variant::Lagrangian ? 1 : 0);
  arch.omega0 = omega0;
  return arch;
}

train::TrainingConfig RunConfig::training_config() const {
  train::TrainingConfig tc;
  tc.steps = steps;
  tc.lr_initial = lr_initial;
  tc.seed = seed;
  tc.loss_spec = loss_spec;
  tc.checkpoint_every = checkpoint_every;
  tc.eval_every = eval_every;
  tc.eval_pairs = eval_pairs;
  tc.workers = workers;
  return tc;
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw ConfigError(path + ": " + why);
}

void check_keys(const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) fail(path.empty() ? key : path + "." + key, "unknown field");
}

double get_num(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "must be a number");
  return j.get<double>();
}

std::int64_t get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "must be an integer");
  return j.get<std::int64_t>();
}

loss::DistanceSpec parse_distance(const json& j, const std::string& path) {
  if (j.is_number()) return loss::DistanceSpec::fixed(j.get<double>());
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
    double lo = j[0].get<double>(), hi = j[1].get<double>();
    if (!(lo < hi)) fail(path, "range needs min < max");
    return loss::DistanceSpec::range(lo, hi);
  }
  fail(path, "must be a number or a [min, max] pair");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  check_keys(j, "", {"format_version", "variant", "colors", "dimension", "box_radius",
                     "p_norm", "distances", "lambda", "triangle_sides", "network",
                     "training", "formalize", "seed", "output_dir", "workers"});
  if (j.contains("format_version") && get_int(j["format_version"], "format_version") != 1)
    fail("format_version", "unsupported version");

  RunConfig cfg;
  loss::LossSpec& ls = cfg.loss_spec;

  if (!j.contains("variant")) fail("variant", "required field is missing");
  std::string v = j["variant"].is_string() ? j["variant"].get<std::string>() : "";
  if (v == "unit") ls.variant = loss::Variant::Unit;
  else if (v == "offdiagonal") ls.variant = loss::Variant::OffDiagonal;
  else if (v == "lagrangian") ls.variant = loss::Variant::Lagrangian;
  else if (v == "triangle") ls.variant = loss::Variant::Triangle;
  else fail("variant", "must be one of unit, offdiagonal, lagrangian, triangle");

  if (!j.contains("colors")) fail("colors", "required field is missing");
  std::int64_t colors = get_int(j["colors"], "colors");
  if (colors < 1) fail("colors", "must be >= 1");
  if (colors > 200) fail("colors", "must be <= 200");
  ls.num_colors = static_cast<int>(colors);

  if (j.contains("dimension")) {
    std::int64_t d = get_int(j["dimension"], "dimension");
    if (d != 2 && d != 3) fail("dimension", "must be 2 or 3");
    ls.dimension = static_cast<int>(d);
  }
  if (j.contains("box_radius")) {
    ls.box_radius = get_num(j["box_radius"], "box_radius");
    if (!(ls.box_radius > 0.0)) fail("box_radius", "must be positive");
  }
  if (j.contains("p_norm")) {
    ls.p_norm = get_num(j["p_norm"], "p_norm");
    if (!(ls.p_norm >= 1.0)) fail("p_norm", "must be >= 1");
  }
  if (j.contains("distances")) {
    if (ls.variant != loss::Variant::OffDiagonal)
      fail("distances", "only meaningful for the offdiagonal variant");
    if (!j["distances"].is_array()) fail("distances", "must be an array");
    int k = 0;
    for (const auto& dj : j["distances"])
      ls.distances.push_back(parse_distance(dj, "distances[" + std::to_string(k++) + "]"));
    if (static_cast<std::int64_t>(ls.distances.size()) != colors)
      fail("distances", "need exactly one entry per color");
  } else if (ls.variant == loss::Variant::OffDiagonal) {
    ls.distances.assign(static_cast<std::size_t>(colors), loss::DistanceSpec::fixed(1.0));
  }
  if (j.contains("lambda")) {
    if (ls.variant != loss::Variant::Lagrangian)
      fail("lambda", "only meaningful for the lagrangian variant");
    ls.lagrange_lambda = get_num(j["lambda"], "lambda");
    if (ls.lagrange_lambda < 0.0) fail("lambda", "must be >= 0");
  } else if (ls.variant == loss::Variant::Lagrangian) {
    ls.lagrange_lambda = 0.03;
  }
  if (j.contains("triangle_sides")) {
    if (ls.variant != loss::Variant::Triangle)
      fail("triangle_sides", "only meaningful for the triangle variant");
    check_keys(j["triangle_sides"], "triangle_sides", {"a", "b"});
    if (j["triangle_sides"].contains("a"))
      ls.triangle_a = parse_distance(j["triangle_sides"]["a"], "triangle_sides.a");
    if (j["triangle_sides"].contains("b"))
      ls.triangle_b = parse_distance(j["triangle_sides"]["b"], "triangle_sides.b");
  }

  if (j.contains("network")) {
    check_keys(j["network"], "network", {"hidden_widths", "omega0"});
    const auto& nj = j["network"];
    if (nj.contains("hidden_widths")) {
      if (!nj["hidden_widths"].is_array() || nj["hidden_widths"].empty())
        fail("network.hidden_widths", "must be a non-empty array");
      cfg.hidden_widths.clear();
      for (const auto& w : nj["hidden_widths"]) {
        std::int64_t wi = get_int(w, "network.hidden_widths");
        if (wi < 1 || wi > 4096) fail("network.hidden_widths", "widths must be in [1, 4096]");
        cfg.hidden_widths.push_back(static_cast<int>(wi));
      }
    }
    if (nj.contains("omega0")) {
      cfg.omega0 = get_num(nj["omega0"], "network.omega0");
      if (!(cfg.omega0 > 0.0)) fail("network.omega0", "must be positive");
    }
  }

  if (j.contains("training")) {
    check_keys(j["training"], "training",
               {"steps", "lr_initial", "batch_centers", "batch_peripherals", "eval_every",
                "checkpoint_every", "eval_pairs"});
    const auto& tj = j["training"];
    if (tj.contains("steps")) {
      cfg.steps = get_int(tj["steps"], "training.steps");
      if (cfg.steps < 1) fail("training.steps", "must be >= 1");
    }
    if (tj.contains("lr_initial")) {
      cfg.lr_initial = get_num(tj["lr_initial"], "training.lr_initial");
      if (!(cfg.lr_initial > 0.0)) fail("training.lr_initial", "must be positive");
    }
    if (tj.contains("batch_centers")) {
      std::int64_t n = get_int(tj["batch_centers"], "training.batch_centers");
      if (n < 1 || n > (1 << 20)) fail("training.batch_centers", "must be in [1, 2^20]");
      ls.batch_centers = static_cast<std::size_t>(n);
    }
    if (tj.contains("batch_peripherals")) {
      std::int64_t m = get_int(tj["batch_peripherals"], "training.batch_peripherals");
      if (m < 1 || m > (1 << 20)) fail("training.batch_peripherals", "must be in [1, 2^20]");
      ls.batch_peripherals = static_cast<std::size_t>(m);
    }
    if (tj.contains("eval_every")) {
      cfg.eval_every = get_int(tj["eval_every"], "training.eval_every");
      if (cfg.eval_every < 1) fail("training.eval_every", "must be >= 1");
    }
    if (tj.contains("checkpoint_every")) {
      cfg.checkpoint_every = get_int(tj["checkpoint_every"], "training.checkpoint_every");
      if (cfg.checkpoint_every < 0) fail("training.checkpoint_every", "must be >= 0");
    }
    if (tj.contains("eval_pairs")) {
      std::int64_t p = get_int(tj["eval_pairs"], "training.eval_pairs");
      if (p < 1) fail("training.eval_pairs", "must be >= 1");
      cfg.eval_pairs = static_cast<std::size_t>(p);
    }
  }

  cfg.formalize_params.periodicity.line_radius = ls.box_radius;
  if (j.contains("formalize")) {
    check_keys(j["formalize"], "formalize", {"k", "l", "m", "rounds", "periodicity"});
    const auto& fj = j["formalize"];
    auto res_field = [&](const char* name, int def) {
      if (!fj.contains(name)) return def;
      std::int64_t r = get_int(fj[name], std::string("formalize.") + name);
      if (r < 1 || r > 4096) fail(std::string("formalize.") + name, "must be in [1, 4096]");
      return static_cast<int>(r);
    };
    cfg.formalize_params.resolution[0] = res_field("k", 200);
    cfg.formalize_params.resolution[1] = res_field("l", 200);
    cfg.formalize_params.resolution[2] = res_field("m", ls.dimension == 3 ? 40 : 1);
    if (fj.contains("rounds")) {
      std::int64_t r = get_int(fj["rounds"], "formalize.rounds");
      if (r < 0 || r > 64) fail("formalize.rounds", "must be in [0, 64]");
      cfg.formalize_params.repair_rounds = static_cast<int>(r);
    }
    if (fj.contains("periodicity")) {
      check_keys(fj["periodicity"], "formalize.periodicity",
                 {"num_directions", "max_offset", "offset_step", "similarity_threshold",
                  "line_samples", "rise_level"});
      const auto& pj = fj["periodicity"];
      auto& pp = cfg.formalize_params.periodicity;
      if (pj.contains("num_directions"))
        pp.num_directions = static_cast<int>(get_int(pj["num_directions"], "formalize.periodicity.num_directions"));
      if (pj.contains("max_offset"))
        pp.max_offset = get_num(pj["max_offset"], "formalize.periodicity.max_offset");
      if (pj.contains("offset_step"))
        pp.offset_step = get_num(pj["offset_step"], "formalize.periodicity.offset_step");
      if (pj.contains("similarity_threshold"))
        pp.similarity_threshold = get_num(pj["similarity_threshold"], "formalize.periodicity.similarity_threshold");
      if (pj.contains("line_samples"))
        pp.line_samples = static_cast<int>(get_int(pj["line_samples"], "formalize.periodicity.line_samples"));
      if (pj.contains("rise_level"))
        pp.rise_level = get_num(pj["rise_level"], "formalize.periodicity.rise_level");
      if (pp.num_directions < 2) fail("formalize.periodicity.num_directions", "must be >= 2");
      if (!(pp.offset_step > 0.0)) fail("formalize.periodicity.offset_step", "must be positive");
      if (!(pp.max_offset > pp.offset_step))
        fail("formalize.periodicity.max_offset", "must exceed offset_step");
    }
  } else {
    cfg.formalize_params.resolution = {200, 200, ls.dimension == 3 ? 40 : 1};
  }
  if (ls.dimension == 2) cfg.formalize_params.resolution[2] = 1;

  if (j.contains("seed")) {
    std::int64_t s = get_int(j["seed"], "seed");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) fail("output_dir", "must be a string");
    cfg.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("workers")) {
    std::int64_t w = get_int(j["workers"], "workers");
    if (w < 1 || w > 1024) fail("workers", "must be in [1, 1024]");
    cfg.workers = static_cast<int>(w);
  }

  cfg.loss_spec.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string dump_run_config(const RunConfig& cfg) {
  json j;
  j["format_version"] = 1;
  j["variant"] = loss::variant_name(cfg.loss_spec.variant);
  j["colors"] = cfg.loss_spec.num_colors;
  j["dimension"] = cfg.loss_spec.dimension;
  j["box_radius"] = cfg.loss_spec.box_radius;
  j["p_norm"] = cfg.loss_spec.p_norm;
  if (cfg.loss_spec.variant == loss::Variant::OffDiagonal) {
    json d = json::array();
    for (const auto& ds : cfg.loss_spec.distances) {
      if (ds.ranged())
        d.push_back(json::array({ds.lo, ds.hi}));
      else
        d.push_back(ds.lo);
    }
    j["distances"] = d;
  }
  if (cfg.loss_spec.variant == loss::Variant::Lagrangian)
    j["lambda"] = cfg.loss_spec.lagrange_lambda;
  if (cfg.loss_spec.variant == loss::Variant::Triangle) {
    auto side = [](const loss::DistanceSpec& s) {
      return s.ranged() ? json(json::array({s.lo, s.hi})) : json(s.lo);
    };
    j["triangle_sides"] = {{"a", side(cfg.loss_spec.triangle_a)},
                           {"b", side(cfg.loss_spec.triangle_b)}};
  }
  j["network"] = {{"hidden_widths", cfg.hidden_widths}, {"omega0", cfg.omega0}};
  j["training"] = {{"steps", cfg.steps},
                   {"lr_initial", cfg.lr_initial},
                   {"batch_centers", cfg.loss_spec.batch_centers},
                   {"batch_peripherals", cfg.loss_spec.batch_peripherals},
                   {"eval_every", cfg.eval_every},
                   {"checkpoint_every", cfg.checkpoint_every},
                   {"eval_pairs", cfg.eval_pairs}};
  const auto& fp = cfg.formalize_params;
  j["formalize"] = {{"k", fp.resolution[0]},
                    {"l", fp.resolution[1]},
                    {"m", fp.resolution[2]},
                    {"rounds", fp.repair_rounds},
                    {"periodicity",
                     {{"num_directions", fp.periodicity.num_directions},
                      {"max_offset", fp.periodicity.max_offset},
                      {"offset_step", fp.periodicity.offset_step},
                      {"similarity_threshold", fp.periodicity.similarity_threshold},
                      {"line_samples", fp.periodicity.line_samples},
                      {"rise_level", fp.periodicity.rise_level}}}};
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["workers"] = cfg.workers;
  return j.dump(1);
}

}  // namespace pf::config
