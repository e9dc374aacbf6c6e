#include "bellsim/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace bellsim {

using nlohmann::json;

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::singlet: return "singlet";
    case ModelKind::pr_box: return "pr-box";
    case ModelKind::lhv: return "lhv";
    case ModelKind::custom: return "custom";
  }
  return "?";
}

namespace {

std::string summarize(const std::vector<ConfigIssue>& issues) {
  std::string out = "invalid configuration:";
  for (const auto& i : issues) out += "\n  " + i.path + ": " + i.reason;
  return out;
}

// Collects problems instead of stopping at the first one.
class Reader {
 public:
  std::vector<ConfigIssue> issues;

  void fail(std::string path, std::string reason) { issues.push_back({std::move(path), std::move(reason)}); }

  void only_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, _] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        fail(path.empty() ? key : path + "." + key, "unknown field");
      }
    }
  }

  const json* object(const json& parent, const std::string& key, const std::string& path) {
    if (!parent.contains(key)) return nullptr;
    const json& v = parent.at(key);
    if (!v.is_object()) {
      fail(path, "must be an object");
      return nullptr;
    }
    return &v;
  }

  void number(const json& parent, const std::string& key, const std::string& path, double& out) {
    if (!parent.contains(key)) return;
    const json& v = parent.at(key);
    if (!v.is_number()) {
      fail(path, "must be a number");
      return;
    }
    out = v.get<double>();
  }

  void boolean(const json& parent, const std::string& key, const std::string& path, bool& out) {
    if (!parent.contains(key)) return;
    const json& v = parent.at(key);
    if (!v.is_boolean()) {
      fail(path, "must be true or false");
      return;
    }
    out = v.get<bool>();
  }

  template <typename T>
  void unsigned_int(const json& parent, const std::string& key, const std::string& path, T& out,
                    std::uint64_t min = 0) {
    if (!parent.contains(key)) return;
    const json& v = parent.at(key);
    if (!v.is_number_integer()) {
      fail(path, "must be an integer");
      return;
    }
    if (v.is_number_unsigned() || v.get<std::int64_t>() >= 0) {
      const auto u = v.get<std::uint64_t>();
      if (u < min) {
        fail(path, "must be at least " + std::to_string(min));
        return;
      }
      out = static_cast<T>(u);
      return;
    }
    fail(path, min > 0 ? "must be a positive integer" : "must be nonnegative");
  }

  std::vector<Angle> angles(const json& v, const std::string& path) {
    std::vector<Angle> out;
    if (!v.is_array() || v.empty()) {
      fail(path, "must be a non-empty array of angles such as \"pi/4\"");
      return out;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = path + "[" + std::to_string(i) + "]";
      if (!v[i].is_string()) {
        fail(p, "must be a string such as \"-3pi/4\"");
        continue;
      }
      try {
        const Angle a = Angle::parse(v[i].get<std::string>());
        if (std::find(out.begin(), out.end(), a) != out.end()) {
          fail(p, "duplicate angle");
        } else {
          out.push_back(a);
        }
      } catch (const Error& e) {
        fail(p, e.what());
      }
    }
    return out;
  }

  void stages(const json& v, const std::string& path, StageTimes& out) {
    only_keys(v, path, {"t0", "t_theta", "t_pm", "t_c"});
    number(v, "t0", path + ".t0", out.t0);
    number(v, "t_theta", path + ".t_theta", out.t_theta);
    number(v, "t_pm", path + ".t_pm", out.t_pm);
    number(v, "t_c", path + ".t_c", out.t_c);
  }

  std::optional<LhvModel> lhv(const json& v, const std::string& path) {
    only_keys(v, path, {"prior", "alice_settings", "bob_settings", "alice_response", "bob_response"});
    LhvModel m;
    unsigned_int(v, "alice_settings", path + ".alice_settings", m.alice_settings, 1);
    unsigned_int(v, "bob_settings", path + ".bob_settings", m.bob_settings, 1);
    auto numbers = [&](const char* key, std::vector<double>& out) {
      const std::string p = path + "." + key;
      if (!v.contains(key) || !v.at(key).is_array()) {
        fail(p, "must be an array of numbers");
        return false;
      }
      for (const auto& x : v.at(key)) {
        if (!x.is_number()) {
          fail(p, "must contain only numbers");
          return false;
        }
        out.push_back(x.get<double>());
      }
      return true;
    };
    auto pairs = [&](const char* key, std::vector<std::array<double, 2>>& out) {
      const std::string p = path + "." + key;
      if (!v.contains(key) || !v.at(key).is_array()) {
        fail(p, "must be an array of [p(+), p(-)] pairs");
        return false;
      }
      for (const auto& x : v.at(key)) {
        if (!x.is_array() || x.size() != 2 || !x[0].is_number() || !x[1].is_number()) {
          fail(p, "must be an array of [p(+), p(-)] pairs");
          return false;
        }
        out.push_back({x[0].get<double>(), x[1].get<double>()});
      }
      return true;
    };
    const bool ok = numbers("prior", m.prior) & pairs("alice_response", m.alice_response) &
                    pairs("bob_response", m.bob_response);
    if (!ok) return std::nullopt;
    try {
      m.validate();
    } catch (const Error& e) {
      fail(path, e.what());
      return std::nullopt;
    }
    return m;
  }
};

}  // namespace

ConfigError::ConfigError(std::vector<ConfigIssue> issues) : Error(summarize(issues)), issues_(std::move(issues)) {}

Behavior ExperimentConfig::behavior() const {
  switch (model) {
    case ModelKind::singlet: return singlet_behavior(alice_angles, bob_angles);
    case ModelKind::pr_box: return pr_box();
    case ModelKind::lhv:
      if (!lhv) throw InvalidArgument("lhv model selected without tables");
      return lhv_behavior(*lhv);
    case ModelKind::custom:
      if (!custom) throw InvalidArgument("custom model selected without a behavior");
      return *custom;
  }
  throw InvalidArgument("unknown model");
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string field(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    const auto first = field.find_first_not_of(" \t\r");
    const auto last = field.find_last_not_of(" \t\r");
    out.push_back(first == std::string::npos ? "" : field.substr(first, last - first + 1));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Labels become angles only when every label on that side parses as one,
// so a binary grid "0","1" stays abstract.
std::vector<Setting> settings_from_labels(const std::vector<std::string>& labels) {
  std::vector<Setting> out;
  try {
    for (const auto& l : labels) out.push_back(Setting::from_angle(Angle::parse(l)));
    return out;
  } catch (const Error&) {
    out.clear();
  }
  for (const auto& l : labels) out.push_back(Setting::abstract(l));
  return out;
}

Outcome outcome_from(const std::string& s, std::size_t line) {
  if (s == "+1" || s == "1" || s == "+") return Outcome::plus;
  if (s == "-1" || s == "-") return Outcome::minus;
  throw InvalidArgument("line " + std::to_string(line) + ": outcome must be +1 or -1, got '" + s + "'");
}

}  // namespace

Behavior parse_behavior(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("behavior file is not valid JSON: ") + e.what());
  }
  auto settings = [&](const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_array()) {
      throw InvalidArgument(std::string("behavior file needs an array '") + key + "'");
    }
    std::vector<std::string> labels;
    for (const auto& s : doc.at(key)) {
      if (!s.is_string()) throw InvalidArgument(std::string("'") + key + "' entries must be strings");
      labels.push_back(s.get<std::string>());
    }
    return settings_from_labels(labels);
  };
  auto alice = settings("alice_settings");
  auto bob = settings("bob_settings");
  if (!doc.contains("table") || !doc.at("table").is_array()) {
    throw InvalidArgument("behavior file needs a 'table' array");
  }
  std::vector<double> table;
  for (const auto& row : doc.at("table")) {
    if (!row.is_array() || row.size() != 4) throw InvalidArgument("each table row must hold 4 probabilities");
    for (const auto& v : row) {
      if (!v.is_number()) throw InvalidArgument("table entries must be numbers");
      table.push_back(v.get<double>());
    }
  }
  return Behavior(std::move(alice), std::move(bob), std::move(table));
}

Behavior parse_behavior_table(std::string_view text) {
  std::vector<std::string> alice_labels;
  std::vector<std::string> bob_labels;
  struct Row {
    std::size_t x, y, cell;
    double p;
  };
  std::vector<Row> rows;
  auto index_in = [](std::vector<std::string>& labels, const std::string& l) {
    auto it = std::find(labels.begin(), labels.end(), l);
    if (it != labels.end()) return static_cast<std::size_t>(it - labels.begin());
    labels.push_back(l);
    return labels.size() - 1;
  };

  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    const auto f = split_csv_line(line);
    if (!header) {
      if (f != std::vector<std::string>{"x", "y", "a", "b", "p"}) {
        throw InvalidArgument("behavior table must start with the header x,y,a,b,p");
      }
      header = true;
      continue;
    }
    if (f.size() != 5) throw InvalidArgument("line " + std::to_string(line_no) + ": expected 5 fields");
    double p = 0.0;
    try {
      std::size_t used = 0;
      p = std::stod(f[4], &used);
      if (used != f[4].size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw InvalidArgument("line " + std::to_string(line_no) + ": probability '" + f[4] + "' is not a number");
    }
    rows.push_back({index_in(alice_labels, f[0]), index_in(bob_labels, f[1]),
                    cell_index(outcome_from(f[2], line_no), outcome_from(f[3], line_no)), p});
  }
  if (!header) throw InvalidArgument("behavior table is empty");

  const std::size_t nx = alice_labels.size();
  const std::size_t ny = bob_labels.size();
  std::vector<double> table(nx * ny * 4, 0.0);
  std::vector<bool> seen(table.size(), false);
  for (const auto& r : rows) {
    const std::size_t k = (r.x * ny + r.y) * 4 + r.cell;
    if (seen[k]) throw InvalidArgument("behavior table lists an entry twice");
    seen[k] = true;
    table[k] = r.p;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw InvalidArgument("behavior table must list all four outcome pairs for every setting pair");
  }
  return Behavior(settings_from_labels(alice_labels), settings_from_labels(bob_labels), std::move(table));
}

std::string format_behavior_table(const Behavior& b) {
  std::ostringstream os;
  os.precision(17);
  os << "x,y,a,b,p\n";
  for (std::size_t x = 0; x < b.alice_count(); ++x) {
    for (std::size_t y = 0; y < b.bob_count(); ++y) {
      const auto s = b.slice(x, y);
      for (std::size_t cell = 0; cell < 4; ++cell) {
        os << b.alice_settings()[x].label << ',' << b.bob_settings()[y].label << ',' << sign_of(cell_a(cell)) << ','
           << sign_of(cell_b(cell)) << ',' << s[cell] << '\n';
      }
    }
  }
  return os.str();
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::vector<ConfigIssue>{{"", std::string("not valid JSON: ") + e.what()}});
  }
  if (!doc.is_object()) throw ConfigError(std::vector<ConfigIssue>{{"", "configuration must be a JSON object"}});

  Reader r;
  ExperimentConfig cfg;
  r.only_keys(doc, "", {"model", "grid", "lhv", "behavior_file", "chsh", "trials_per_pair", "seed", "observers",
                        "stages", "c", "signal_speed", "q", "modes", "threads", "plot"});

  if (doc.contains("model")) {
    const json& m = doc.at("model");
    const std::string name = m.is_string() ? m.get<std::string>() : "";
    if (name == "singlet") {
      cfg.model = ModelKind::singlet;
    } else if (name == "pr-box") {
      cfg.model = ModelKind::pr_box;
    } else if (name == "lhv") {
      cfg.model = ModelKind::lhv;
    } else if (name == "custom") {
      cfg.model = ModelKind::custom;
    } else {
      r.fail("model", "must be one of singlet, pr-box, lhv, custom");
    }
  }

  if (const json* g = r.object(doc, "grid", "grid")) {
    r.only_keys(*g, "grid", {"alice", "bob"});
    if (cfg.model != ModelKind::singlet) r.fail("grid", "only the singlet model takes an angle grid");
    if (g->contains("alice")) cfg.alice_angles = r.angles(g->at("alice"), "grid.alice");
    if (g->contains("bob")) cfg.bob_angles = r.angles(g->at("bob"), "grid.bob");
  }

  if (const json* l = r.object(doc, "lhv", "lhv")) {
    cfg.lhv = r.lhv(*l, "lhv");
  } else if (cfg.model == ModelKind::lhv && !doc.contains("lhv")) {
    r.fail("lhv", "required when model is lhv");
  }

  if (doc.contains("behavior_file")) {
    if (!doc.at("behavior_file").is_string()) {
      r.fail("behavior_file", "must be a path string");
    } else {
      cfg.behavior_file = doc.at("behavior_file").get<std::string>();
    }
  }
  if (cfg.model == ModelKind::custom) {
    if (cfg.behavior_file.empty()) {
      r.fail("behavior_file", "required when model is custom");
    } else {
      std::filesystem::path p(cfg.behavior_file);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      std::ifstream in(p);
      if (!in) {
        r.fail("behavior_file", "cannot read " + p.string());
      } else {
        std::stringstream buf;
        buf << in.rdbuf();
        try {
          cfg.custom = p.extension() == ".csv" ? parse_behavior_table(buf.str()) : parse_behavior(buf.str());
        } catch (const Error& e) {
          r.fail("behavior_file", e.what());
        }
      }
    }
  }

  if (const json* c = r.object(doc, "chsh", "chsh")) {
    r.only_keys(*c, "chsh", {"x0", "x1", "y0", "y1"});
    r.unsigned_int(*c, "x0", "chsh.x0", cfg.chsh.x0);
    r.unsigned_int(*c, "x1", "chsh.x1", cfg.chsh.x1);
    r.unsigned_int(*c, "y0", "chsh.y0", cfg.chsh.y0);
    r.unsigned_int(*c, "y1", "chsh.y1", cfg.chsh.y1);
  }
  r.unsigned_int(doc, "trials_per_pair", "trials_per_pair", cfg.trials_per_pair, 1);
  r.unsigned_int(doc, "seed", "seed", cfg.seed);
  r.unsigned_int(doc, "threads", "threads", cfg.threads);

  if (const json* o = r.object(doc, "observers", "observers")) {
    r.only_keys(*o, "observers", {"alice_x", "bob_x"});
    r.number(*o, "alice_x", "observers.alice_x", cfg.schedule.alice_x);
    r.number(*o, "bob_x", "observers.bob_x", cfg.schedule.bob_x);
  }
  if (const json* s = r.object(doc, "stages", "stages")) {
    if (s->contains("alice") || s->contains("bob")) {
      r.only_keys(*s, "stages", {"alice", "bob"});
      if (const json* a = r.object(*s, "alice", "stages.alice")) r.stages(*a, "stages.alice", cfg.schedule.alice);
      if (const json* b = r.object(*s, "bob", "stages.bob")) r.stages(*b, "stages.bob", cfg.schedule.bob);
    } else {
      r.stages(*s, "stages", cfg.schedule.alice);
      cfg.schedule.bob = cfg.schedule.alice;
    }
  }
  r.number(doc, "c", "c", cfg.schedule.c);
  r.number(doc, "signal_speed", "signal_speed", cfg.schedule.signal_speed);
  if (!doc.contains("signal_speed") && doc.contains("c")) cfg.schedule.signal_speed = cfg.schedule.c;

  if (const json* q = r.object(doc, "q", "q")) {
    r.only_keys(*q, "q", {"setting_width"});
    r.number(*q, "setting_width", "q.setting_width", cfg.q.setting_width);
    if (cfg.q.setting_width < 0.0) r.fail("q.setting_width", "must be nonnegative");
  }
  if (const json* m = r.object(doc, "modes", "modes")) {
    r.only_keys(*m, "modes", {"preset_settings", "unresolved_local_setting"});
    r.boolean(*m, "preset_settings", "modes.preset_settings", cfg.preset_settings);
    r.boolean(*m, "unresolved_local_setting", "modes.unresolved_local_setting", cfg.q.unresolved_local_setting);
  }
  if (const json* p = r.object(doc, "plot", "plot")) {
    r.only_keys(*p, "plot", {"curve_points"});
    r.unsigned_int(*p, "curve_points", "plot.curve_points", cfg.curve_points);
  }

  // Cross-module checks, run even when other fields failed so every problem is listed.
  try {
    build_schedule(cfg.schedule);
  } catch (const InvalidSchedule& e) {
    r.fail("stages", std::string("invalid schedule: ") + e.what());
  }
  std::optional<Behavior> behavior;
  const bool model_ready = (cfg.model != ModelKind::lhv || cfg.lhv) && (cfg.model != ModelKind::custom || cfg.custom) &&
                           !cfg.alice_angles.empty() && !cfg.bob_angles.empty();
  if (model_ready) {
    try {
      behavior = cfg.behavior();
    } catch (const Error& e) {
      r.fail("model", e.what());
    }
  }
  if (behavior) {
    const auto check = [&](std::size_t v, std::size_t n, const char* path) {
      if (v >= n) r.fail(path, "setting index " + std::to_string(v) + " outside a grid of " + std::to_string(n));
    };
    check(cfg.chsh.x0, behavior->alice_count(), "chsh.x0");
    check(cfg.chsh.x1, behavior->alice_count(), "chsh.x1");
    check(cfg.chsh.y0, behavior->bob_count(), "chsh.y0");
    check(cfg.chsh.y1, behavior->bob_count(), "chsh.y1");
  }

  if (!r.issues.empty()) throw ConfigError(std::move(r.issues));
  return cfg;
}

}  // namespace bellsim
