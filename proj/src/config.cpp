#include "xdmatch/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "xdmatch/common.hpp"

namespace xdm {

namespace {

using nlohmann::json;

// rejects typos instead of silently ignoring them
void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (allowed.find(key) == allowed.end()) {
      throw std::runtime_error("config: unknown key '" + where + key + "'");
    }
  }
}

template <typename T>
void get_to_if(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) obj.at(key).get_to(out);
}

}  // namespace

AppConfig load_config(const std::string& path) {
  AppConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json root = json::parse(in);

  check_keys(root, "", {"paths", "ingest", "blocking", "boost", "bagging", "self_training",
                        "postprocess", "world", "master_seed", "threads"});
  if (root.contains("paths")) {
    const json& j = root["paths"];
    check_keys(j, "paths.", {"world_dir", "out_dir", "dictionary_file"});
    get_to_if(j, "world_dir", cfg.world_dir);
    get_to_if(j, "out_dir", cfg.out_dir);
    get_to_if(j, "dictionary_file", cfg.dictionary_file);
  }
  if (root.contains("ingest")) {
    const json& j = root["ingest"];
    check_keys(j, "ingest.", {"handle_sentinel"});
    get_to_if(j, "handle_sentinel", cfg.handle_sentinel);
  }
  if (root.contains("blocking")) {
    const json& j = root["blocking"];
    check_keys(j, "blocking.", {"r1_dev", "r1_cook", "r2_dev", "r2_cook"});
    get_to_if(j, "r1_dev", cfg.pipeline.blocking.r1_dev);
    get_to_if(j, "r1_cook", cfg.pipeline.blocking.r1_cook);
    get_to_if(j, "r2_dev", cfg.pipeline.blocking.r2_dev);
    get_to_if(j, "r2_cook", cfg.pipeline.blocking.r2_cook);
    cfg.pipeline.blocking.validate();
  }
  if (root.contains("boost")) {
    const json& j = root["boost"];
    check_keys(j, "boost.", {"rounds", "max_depth", "subsample", "min_child_weight",
                             "learning_rate", "min_split_gain", "l2_reg", "base_score"});
    BoostParams& b = cfg.pipeline.boost;
    get_to_if(j, "rounds", b.rounds);
    get_to_if(j, "max_depth", b.max_depth);
    get_to_if(j, "subsample", b.subsample);
    get_to_if(j, "min_child_weight", b.min_child_weight);
    get_to_if(j, "learning_rate", b.learning_rate);
    get_to_if(j, "min_split_gain", b.min_split_gain);
    get_to_if(j, "l2_reg", b.l2_reg);
    get_to_if(j, "base_score", b.base_score);
    b.validate();
  }
  if (root.contains("bagging")) {
    const json& j = root["bagging"];
    check_keys(j, "bagging.", {"n_bags", "bootstrap"});
    get_to_if(j, "n_bags", cfg.pipeline.n_bags);
    get_to_if(j, "bootstrap", cfg.pipeline.bootstrap);
    if (cfg.pipeline.n_bags < 1) throw std::runtime_error("config: n_bags must be >= 1");
  }
  if (root.contains("self_training")) {
    const json& j = root["self_training"];
    check_keys(j, "self_training.", {"enabled", "top_min", "second_max"});
    get_to_if(j, "enabled", cfg.pipeline.self_training);
    get_to_if(j, "top_min", cfg.pipeline.pseudo_top_min);
    get_to_if(j, "second_max", cfg.pipeline.pseudo_second_max);
  }
  if (root.contains("postprocess")) {
    const json& j = root["postprocess"];
    check_keys(j, "postprocess.", {"step1_threshold", "sentinel", "access_params"});
    get_to_if(j, "step1_threshold", cfg.pipeline.post.step1_threshold);
    get_to_if(j, "sentinel", cfg.pipeline.post.sentinel);
    if (j.contains("access_params")) {
      for (const auto& [key, value] : j["access_params"].items()) {
        cfg.pipeline.post.set_multiplier(parse_postprocess_key(key), value.get<double>());
      }
    }
  }
  if (root.contains("world")) {
    const json& j = root["world"];
    check_keys(j, "world.",
               {"n_persons", "device_lambda", "cookie_lambda", "private_ip_lambda",
                "member_ip_prob", "drifter_prob", "public_ip_count", "public_ip_attach_prob",
                "shared_ip_count", "shared_ip_attach_prob", "cell_ip_fraction",
                "unknown_handle_fraction", "test_person_fraction", "n_properties", "props_lambda",
                "categorical_missing_prob", "numeric_missing_prob", "seed"});
    WorldConfig& w = cfg.world;
    get_to_if(j, "n_persons", w.n_persons);
    get_to_if(j, "device_lambda", w.device_lambda);
    get_to_if(j, "cookie_lambda", w.cookie_lambda);
    get_to_if(j, "private_ip_lambda", w.private_ip_lambda);
    get_to_if(j, "member_ip_prob", w.member_ip_prob);
    get_to_if(j, "drifter_prob", w.drifter_prob);
    get_to_if(j, "public_ip_count", w.public_ip_count);
    get_to_if(j, "public_ip_attach_prob", w.public_ip_attach_prob);
    get_to_if(j, "shared_ip_count", w.shared_ip_count);
    get_to_if(j, "shared_ip_attach_prob", w.shared_ip_attach_prob);
    get_to_if(j, "cell_ip_fraction", w.cell_ip_fraction);
    get_to_if(j, "unknown_handle_fraction", w.unknown_handle_fraction);
    get_to_if(j, "test_person_fraction", w.test_person_fraction);
    get_to_if(j, "n_properties", w.n_properties);
    get_to_if(j, "props_lambda", w.props_lambda);
    get_to_if(j, "categorical_missing_prob", w.categorical_missing_prob);
    get_to_if(j, "numeric_missing_prob", w.numeric_missing_prob);
    get_to_if(j, "seed", w.seed);
    w.validate();
  }
  get_to_if(root, "master_seed", cfg.pipeline.master_seed);
  get_to_if(root, "threads", cfg.pipeline.n_threads);
  return cfg;
}

void save_config(const AppConfig& cfg, const std::string& path) {
  json root;
  root["paths"] = {{"world_dir", cfg.world_dir}, {"out_dir", cfg.out_dir}};
  if (!cfg.dictionary_file.empty()) root["paths"]["dictionary_file"] = cfg.dictionary_file;
  root["ingest"] = {{"handle_sentinel", cfg.handle_sentinel}};
  const BlockingThresholds& t = cfg.pipeline.blocking;
  root["blocking"] = {{"r1_dev", t.r1_dev}, {"r1_cook", t.r1_cook},
                      {"r2_dev", t.r2_dev}, {"r2_cook", t.r2_cook}};
  const BoostParams& b = cfg.pipeline.boost;
  root["boost"] = {{"rounds", b.rounds},
                   {"max_depth", b.max_depth},
                   {"subsample", b.subsample},
                   {"min_child_weight", b.min_child_weight},
                   {"learning_rate", b.learning_rate},
                   {"min_split_gain", b.min_split_gain},
                   {"l2_reg", b.l2_reg},
                   {"base_score", b.base_score}};
  root["bagging"] = {{"n_bags", cfg.pipeline.n_bags}, {"bootstrap", cfg.pipeline.bootstrap}};
  root["self_training"] = {{"enabled", cfg.pipeline.self_training},
                           {"top_min", cfg.pipeline.pseudo_top_min},
                           {"second_max", cfg.pipeline.pseudo_second_max}};
  json access;
  for (int lb = 0; lb < 3; ++lb) {
    for (int mb = 0; mb < 3; ++mb) {
      for (int wk = 0; wk < 2; ++wk) {
        for (int ck = 0; ck < 2; ++ck) {
          PostProcessKey key{lb, mb, wk == 1, ck == 1};
          access[postprocess_key_name(key)] = cfg.pipeline.post.multiplier(key);
        }
      }
    }
  }
  root["postprocess"] = {{"step1_threshold", cfg.pipeline.post.step1_threshold},
                         {"sentinel", cfg.pipeline.post.sentinel},
                         {"access_params", access}};
  const WorldConfig& w = cfg.world;
  root["world"] = {{"n_persons", w.n_persons},
                   {"device_lambda", w.device_lambda},
                   {"cookie_lambda", w.cookie_lambda},
                   {"private_ip_lambda", w.private_ip_lambda},
                   {"member_ip_prob", w.member_ip_prob},
                   {"drifter_prob", w.drifter_prob},
                   {"public_ip_count", w.public_ip_count},
                   {"public_ip_attach_prob", w.public_ip_attach_prob},
                   {"shared_ip_count", w.shared_ip_count},
                   {"shared_ip_attach_prob", w.shared_ip_attach_prob},
                   {"cell_ip_fraction", w.cell_ip_fraction},
                   {"unknown_handle_fraction", w.unknown_handle_fraction},
                   {"test_person_fraction", w.test_person_fraction},
                   {"n_properties", w.n_properties},
                   {"props_lambda", w.props_lambda},
                   {"categorical_missing_prob", w.categorical_missing_prob},
                   {"numeric_missing_prob", w.numeric_missing_prob},
                   {"seed", w.seed}};
  root["master_seed"] = cfg.pipeline.master_seed;
  root["threads"] = cfg.pipeline.n_threads;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << root.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace xdm
