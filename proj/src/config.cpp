#include "fedidm/config.hpp"

#include <algorithm>
#include <fstream>

namespace fedidm {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& msg) { throw ConfigError(msg); }

void check_keys(const json& j, const std::string& scope,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad(scope + " must be a json object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return item.key() == a; });
    if (!known) bad("unknown key '" + item.key() + "' in " + scope);
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& scope) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    bad("bad value for " + scope + "." + key);
  }
}

}  // namespace

const std::vector<std::string>& attack_names_ordered() {
  static const std::vector<std::string> names = {"NONE", "LIE", "STAT_OPT",
                                                 "DYN_OPT", "SLF", "DLF"};
  return names;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  SimConfig& b = cfg.base;
  check_keys(j, "config",
             {"n_clients", "clients_per_round", "total_rounds", "stage_switch", "local_epochs",
              "local_lr", "local_batch", "seed", "aggregator", "acdg_enabled", "ra_enabled",
              "krum_f", "multi_k", "bulyan_f", "trim_fraction", "attack", "ra", "dm", "acdg",
              "data", "model", "output_dir", "grid"});

  read_field(j, "n_clients", b.n_clients, "config");
  read_field(j, "clients_per_round", b.clients_per_round, "config");
  read_field(j, "total_rounds", b.total_rounds, "config");
  read_field(j, "stage_switch", b.stage_switch, "config");
  read_field(j, "local_epochs", b.local_epochs, "config");
  read_field(j, "local_lr", b.local_lr, "config");
  read_field(j, "local_batch", b.local_batch, "config");
  read_field(j, "seed", b.seed, "config");
  read_field(j, "aggregator", b.aggregator, "config");
  read_field(j, "acdg_enabled", b.acdg_enabled, "config");
  read_field(j, "ra_enabled", b.ra_enabled, "config");
  read_field(j, "krum_f", b.krum_f, "config");
  read_field(j, "multi_k", b.multi_k, "config");
  read_field(j, "bulyan_f", b.bulyan_f, "config");
  read_field(j, "trim_fraction", b.trim_fraction, "config");

  if (j.contains("attack")) {
    const json& a = j.at("attack");
    check_keys(a, "config.attack",
               {"kind", "malicious_fraction", "adversarial_round_fraction", "gamma_init",
                "halving_steps", "stat_literal", "dyn_use_std", "z_override"});
    if (a.contains("kind")) {
      std::string name;
      read_field(a, "kind", name, "config.attack");
      try {
        b.attack.kind = attack_from_name(name);
      } catch (const std::invalid_argument& e) {
        bad(e.what());
      }
    }
    read_field(a, "malicious_fraction", b.attack.malicious_fraction, "config.attack");
    read_field(a, "adversarial_round_fraction", b.attack.adversarial_round_fraction,
               "config.attack");
    read_field(a, "gamma_init", b.attack.gamma_init, "config.attack");
    read_field(a, "halving_steps", b.attack.halving_steps, "config.attack");
    read_field(a, "stat_literal", b.attack.stat_literal, "config.attack");
    read_field(a, "dyn_use_std", b.attack.dyn_use_std, "config.attack");
    if (a.contains("z_override")) {
      const json& z = a.at("z_override");
      if (z.is_null())
        b.attack.z_override.reset();
      else if (z.is_number())
        b.attack.z_override = z.get<double>();
      else
        bad("config.attack.z_override must be a number or null");
    }
  }

  if (j.contains("ra")) {
    const json& r = j.at("ra");
    check_keys(r, "config.ra", {"lambda", "delta_hist", "k_top", "ell_o", "dbscan_eps", "eta"});
    read_field(r, "lambda", b.ra.lambda, "config.ra");
    read_field(r, "delta_hist", b.ra.delta_hist, "config.ra");
    read_field(r, "k_top", b.ra.k_top, "config.ra");
    read_field(r, "ell_o", b.ra.ell_o, "config.ra");
    read_field(r, "dbscan_eps", b.ra.dbscan_eps, "config.ra");
    read_field(r, "eta", b.ra.eta, "config.ra");
  }

  if (j.contains("dm")) {
    const json& d = j.at("dm");
    check_keys(d, "config.dm", {"ipc", "steps", "n_random_nets", "lr_s", "upsilon"});
    read_field(d, "ipc", b.dm.ipc, "config.dm");
    read_field(d, "steps", b.dm.steps, "config.dm");
    read_field(d, "n_random_nets", b.dm.n_random_nets, "config.dm");
    read_field(d, "lr_s", b.dm.lr_s, "config.dm");
    read_field(d, "upsilon", b.dm.upsilon, "config.dm");
  }

  if (j.contains("acdg")) {
    const json& a = j.at("acdg");
    check_keys(a, "config.acdg",
               {"delta_window", "tau", "epochs_rect", "rect_lr", "mix_alpha", "eps_resp", "aug"});
    read_field(a, "delta_window", b.acdg.delta_window, "config.acdg");
    read_field(a, "tau", b.acdg.tau, "config.acdg");
    read_field(a, "epochs_rect", b.acdg.epochs_rect, "config.acdg");
    read_field(a, "rect_lr", b.acdg.rect_lr, "config.acdg");
    read_field(a, "mix_alpha", b.acdg.mix_alpha, "config.acdg");
    read_field(a, "eps_resp", b.acdg.eps_resp, "config.acdg");
    if (a.contains("aug")) {
      const json& g = a.at("aug");
      check_keys(g, "config.acdg.aug", {"sigma", "mask_prob"});
      read_field(g, "sigma", b.acdg.aug.sigma, "config.acdg.aug");
      read_field(g, "mask_prob", b.acdg.aug.mask_prob, "config.acdg.aug");
    }
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, "config.data",
               {"k_classes", "input_dim", "points_per_class", "separation", "concentration",
                "test_points_per_class", "root_points_per_class"});
    read_field(d, "k_classes", b.data.k_classes, "config.data");
    read_field(d, "input_dim", b.data.input_dim, "config.data");
    read_field(d, "points_per_class", b.data.points_per_class, "config.data");
    read_field(d, "separation", b.data.separation, "config.data");
    read_field(d, "concentration", b.data.concentration, "config.data");
    read_field(d, "test_points_per_class", b.data.test_points_per_class, "config.data");
    read_field(d, "root_points_per_class", b.data.root_points_per_class, "config.data");
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "config.model", {"hidden", "phi", "rect_hidden", "embed_dim"});
    read_field(m, "hidden", b.model.hidden, "config.model");
    read_field(m, "phi", b.model.phi, "config.model");
    read_field(m, "rect_hidden", b.model.rect_hidden, "config.model");
    read_field(m, "embed_dim", b.model.embed_dim, "config.model");
  }

  read_field(j, "output_dir", cfg.output_dir, "config");
  if (cfg.output_dir.empty()) bad("output_dir must not be empty");

  if (j.contains("grid")) {
    const json& g = j.at("grid");
    check_keys(g, "config.grid", {"aggregators", "attacks", "seeds"});
    read_field(g, "aggregators", cfg.aggregators, "config.grid");
    read_field(g, "attacks", cfg.attacks, "config.grid");
    read_field(g, "seeds", cfg.seeds, "config.grid");
  }
  if (cfg.aggregators.empty()) cfg.aggregators = {b.aggregator};
  if (cfg.attacks.empty()) cfg.attacks = {attack_name(b.attack.kind)};
  if (cfg.seeds.empty()) cfg.seeds = {b.seed};

  const auto& aggs = aggregator_names();
  for (const std::string& a : cfg.aggregators)
    if (std::find(aggs.begin(), aggs.end(), a) == aggs.end()) bad("unknown aggregator: " + a);
  for (const std::string& a : cfg.attacks) {
    try {
      attack_from_name(a);
    } catch (const std::invalid_argument& e) {
      bad(e.what());
    }
  }

  try {
    validate(b);
  } catch (const std::invalid_argument& e) {
    bad(e.what());
  }
  return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  const SimConfig& b = cfg.base;
  json j;
  j["n_clients"] = b.n_clients;
  j["clients_per_round"] = b.clients_per_round;
  j["total_rounds"] = b.total_rounds;
  j["stage_switch"] = b.stage_switch;
  j["local_epochs"] = b.local_epochs;
  j["local_lr"] = b.local_lr;
  j["local_batch"] = b.local_batch;
  j["seed"] = b.seed;
  j["aggregator"] = b.aggregator;
  j["acdg_enabled"] = b.acdg_enabled;
  j["ra_enabled"] = b.ra_enabled;
  j["krum_f"] = b.krum_f;
  j["multi_k"] = b.multi_k;
  j["bulyan_f"] = b.bulyan_f;
  j["trim_fraction"] = b.trim_fraction;
  j["attack"] = {{"kind", attack_name(b.attack.kind)},
                 {"malicious_fraction", b.attack.malicious_fraction},
                 {"adversarial_round_fraction", b.attack.adversarial_round_fraction},
                 {"gamma_init", b.attack.gamma_init},
                 {"halving_steps", b.attack.halving_steps},
                 {"stat_literal", b.attack.stat_literal},
                 {"dyn_use_std", b.attack.dyn_use_std},
                 {"z_override", b.attack.z_override ? json(*b.attack.z_override) : json(nullptr)}};
  j["ra"] = {{"lambda", b.ra.lambda},   {"delta_hist", b.ra.delta_hist},
             {"k_top", b.ra.k_top},     {"ell_o", b.ra.ell_o},
             {"dbscan_eps", b.ra.dbscan_eps}, {"eta", b.ra.eta}};
  j["dm"] = {{"ipc", b.dm.ipc},
             {"steps", b.dm.steps},
             {"n_random_nets", b.dm.n_random_nets},
             {"lr_s", b.dm.lr_s},
             {"upsilon", b.dm.upsilon}};
  j["acdg"] = {{"delta_window", b.acdg.delta_window},
               {"tau", b.acdg.tau},
               {"epochs_rect", b.acdg.epochs_rect},
               {"rect_lr", b.acdg.rect_lr},
               {"mix_alpha", b.acdg.mix_alpha},
               {"eps_resp", b.acdg.eps_resp},
               {"aug", {{"sigma", b.acdg.aug.sigma}, {"mask_prob", b.acdg.aug.mask_prob}}}};
  j["data"] = {{"k_classes", b.data.k_classes},
               {"input_dim", b.data.input_dim},
               {"points_per_class", b.data.points_per_class},
               {"separation", b.data.separation},
               {"concentration", b.data.concentration},
               {"test_points_per_class", b.data.test_points_per_class},
               {"root_points_per_class", b.data.root_points_per_class}};
  j["model"] = {{"hidden", b.model.hidden},
                {"phi", b.model.phi},
                {"rect_hidden", b.model.rect_hidden},
                {"embed_dim", b.model.embed_dim}};
  j["output_dir"] = cfg.output_dir;
  j["grid"] = {{"aggregators", cfg.aggregators},
               {"attacks", cfg.attacks},
               {"seeds", cfg.seeds}};
  return j;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("config file not found: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    bad("invalid json in " + path + ": " + e.what());
  }
  return j;
}

ExperimentConfig load_config_file(const std::string& path) {
  return config_from_json(load_json_file(path));
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    bad("override must look like dotted.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings like fedidm stay strings
  }

  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string seg = path.substr(start, dot - start);
    if (seg.empty()) bad("empty segment in override path: " + path);
    if (dot == std::string::npos) {
      (*cur)[seg] = value;
      return;
    }
    json& next = (*cur)[seg];
    if (!next.is_object() && !next.is_null()) bad("override path crosses a scalar: " + path);
    cur = &next;
    start = dot + 1;
  }
}

}  // namespace fedidm
