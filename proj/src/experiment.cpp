#include "sedattack/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "sedattack/error.hpp"
#include "sedattack/seed.hpp"

namespace sedattack {

namespace {

using Json = nlohmann::json;

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty())
    throw ValidationError("config key '" + key + "': expected a number, got '" + text + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty())
    throw ValidationError("config key '" + key + "': expected an integer, got '" + text + "'");
  return v;
}

std::size_t parse_count(const std::string& key, const std::string& text) {
  const long long v = parse_int(key, text);
  if (v < 0) throw ValidationError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ValidationError("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void claim_dir(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir))
    throw ValidationError("output directory already exists: " + dir.string());
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void require_file(const std::filesystem::path& p, const std::string& hint) {
  if (!std::filesystem::exists(p)) throw IoError("missing " + p.string() + " (" + hint + ")");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

class Csv {
 public:
  explicit Csv(const std::string& header) { text_ = header + "\n"; }
  void row(const std::string& r) { text_ += r + "\n"; }
  void save(const std::filesystem::path& p) const { write_text(p, text_); }

 private:
  std::string text_;
};

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

CampaignConfig campaign_config(const ExperimentConfig& cfg) {
  CampaignConfig c;
  c.attack = cfg.attack;
  c.scenario = cfg.scenario;
  c.max_scenarios = cfg.scenarios;
  c.seed = derive_seed(cfg.seed, {300});
  c.jobs = cfg.jobs;
  c.frontend = cfg.scene.frontend;
  return c;
}

std::vector<CampaignScene> load_campaign_scenes(const Layout& out) {
  const auto dir = out.dataset() / "test";
  require_file(dir, "run synth first");
  std::vector<CampaignScene> scenes;
  for (auto& e : load_dataset(dir)) scenes.push_back({e.id, std::move(e.audio)});
  return scenes;
}

ModelParams load_model(const Layout& out) {
  require_file(out.checkpoint(), "run train first");
  return load_checkpoint(out.checkpoint());
}

Json edit_json(const TargetEdit& e) {
  return {{"class", e.class_id}, {"start", e.start}, {"end", e.end}, {"value", static_cast<int>(e.value)}};
}

TargetEdit edit_from_json(const Json& j) {
  TargetEdit e;
  e.class_id = j.at("class").get<int>();
  e.start = j.at("start").get<double>();
  e.end = j.at("end").get<double>();
  const int v = j.at("value").get<int>();
  if (v != 0 && v != 1) throw FormatError("edit value must be 0 or 1");
  e.value = static_cast<EditValue>(v);
  return e;
}

std::string prefix(const ExperimentConfig& cfg) { return cfg.hash() + "," + std::to_string(cfg.seed); }

std::string campaign_fields(const CampaignResult& r) {
  return std::to_string(r.aggregate.runs) + "," + std::to_string(r.skipped.size()) + "," +
         std::to_string(r.aggregate.infinite_snr_runs) + "," + metrics_csv_fields(r.aggregate);
}

Waveform clamp_unit(const Waveform& w) { return clamp(w, -1.0, 1.0); }

}  // namespace

void ExperimentConfig::validate() const {
  if (jobs < 1) throw ValidationError("jobs must be at least 1");
  if (train_scenes == 0 && val_scenes == 0 && test_scenes == 0)
    throw ValidationError("dataset must contain at least one scene");
  scene.validate();
  if (train.epochs < 0 || train.batch <= 0 || !(train.lr > 0.0))
    throw ValidationError("train: epochs >= 0, batch > 0 and lr > 0 required");
  attack.validate();
  scenario.validate();
  if (scenarios == 0) throw ValidationError("scenario count must be positive");
  if (defenses.empty()) throw ValidationError("defense list is empty");
  for (auto k : defenses) {
    DefenseConfig d = defense;
    d.kind = k;
    d.validate(scene.frontend.sample_rate);
  }
  if (sweep_parameter != "alpha" && sweep_parameter != "tau")
    throw ValidationError("sweep parameter must be alpha or tau");
  for (int k : scale_k)
    if (k < 1 || k > 10) throw ValidationError("scale k values must be in [1, 10]");
  if (!(scale_edit_seconds > 0.0)) throw ValidationError("scale edit_seconds must be positive");
}

std::string ExperimentConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(seed);
  kv["jobs"] = std::to_string(jobs);
  kv["dataset.train_scenes"] = std::to_string(train_scenes);
  kv["dataset.val_scenes"] = std::to_string(val_scenes);
  kv["dataset.test_scenes"] = std::to_string(test_scenes);
  kv["dataset.clip_seconds"] = num(scene.clip_seconds);
  kv["dataset.max_events"] = std::to_string(scene.max_events);
  kv["dataset.overlap"] = scene.overlap_allowed ? "true" : "false";
  kv["dataset.min_duration"] = num(scene.min_duration);
  kv["dataset.max_duration"] = num(scene.max_duration);
  kv["train.epochs"] = std::to_string(train.epochs);
  kv["train.batch"] = std::to_string(train.batch);
  kv["train.lr"] = num(train.lr);
  kv["attack.mode"] = to_string(attack.mode);
  kv["attack.alpha"] = num(attack.alpha);
  kv["attack.tau"] = num(attack.tau);
  kv["attack.beta"] = num(attack.beta);
  kv["attack.iterations"] = std::to_string(attack.n_iters);
  kv["attack.optimizer"] = to_string(attack.optimizer);
  kv["attack.random_init"] = attack.random_init ? "true" : "false";
  kv["scenario.edits"] = std::to_string(scenario.k);
  kv["scenario.edit_seconds"] = num(scenario.edit_seconds);
  kv["scenario.eligibility"] = num(scenario.eligibility);
  kv["scenario.count"] = std::to_string(scenarios);
  std::string kinds;
  for (auto k : defenses) kinds += (kinds.empty() ? "" : ",") + to_string(k);
  kv["defense.kinds"] = kinds;
  kv["defense.down_rate"] = std::to_string(defense.down_rate);
  kv["defense.sigma"] = num(defense.sigma);
  kv["defense.window"] = std::to_string(defense.window);
  kv["defense.lowpass"] = defense.lowpass ? "true" : "false";
  kv["sweep.parameter"] = sweep_parameter;
  std::string vals;
  for (double v : sweep_values) vals += (vals.empty() ? "" : ",") + num(v);
  kv["sweep.values"] = vals;
  std::string ks;
  for (int k : scale_k) ks += (ks.empty() ? "" : ",") + std::to_string(k);
  kv["scale.k_values"] = ks;
  kv["scale.edit_seconds"] = num(scale_edit_seconds);
  std::string root, sections, current;
  for (const auto& [k, v] : kv) {
    const auto dot = k.find('.');
    if (dot == std::string::npos) {
      root += k + " = " + v + "\n";
      continue;
    }
    const std::string section = k.substr(0, dot);
    if (section != current) {
      sections += "\n[" + section + "]\n";
      current = section;
    }
    sections += k.substr(dot + 1) + " = " + v + "\n";
  }
  return root + sections;
}

std::string ExperimentConfig::hash() const {
  ExperimentConfig c = *this;
  c.seed = 0;
  c.jobs = 1;
  return fnv1a_hex(c.canonical());
}

ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError("config: " + std::string(e.message()) + " at line " + std::to_string(e.line()));
  }

  ExperimentConfig cfg;
  using Setter = std::function<void(const std::string& key, const std::string& value)>;
  const std::map<std::string, std::map<std::string, Setter>> schema = {
      {"", {
          {"seed", [&](auto& k, auto& v) { cfg.seed = parse_count(k, v); }},
          {"jobs", [&](auto& k, auto& v) { cfg.jobs = static_cast<int>(parse_int(k, v)); }},
      }},
      {"dataset", {
          {"train_scenes", [&](auto& k, auto& v) { cfg.train_scenes = parse_count(k, v); }},
          {"val_scenes", [&](auto& k, auto& v) { cfg.val_scenes = parse_count(k, v); }},
          {"test_scenes", [&](auto& k, auto& v) { cfg.test_scenes = parse_count(k, v); }},
          {"clip_seconds", [&](auto& k, auto& v) { cfg.scene.clip_seconds = parse_double(k, v); }},
          {"max_events", [&](auto& k, auto& v) { cfg.scene.max_events = static_cast<int>(parse_int(k, v)); }},
          {"overlap", [&](auto& k, auto& v) { cfg.scene.overlap_allowed = parse_bool(k, v); }},
          {"min_duration", [&](auto& k, auto& v) { cfg.scene.min_duration = parse_double(k, v); }},
          {"max_duration", [&](auto& k, auto& v) { cfg.scene.max_duration = parse_double(k, v); }},
      }},
      {"train", {
          {"epochs", [&](auto& k, auto& v) { cfg.train.epochs = static_cast<int>(parse_int(k, v)); }},
          {"batch", [&](auto& k, auto& v) { cfg.train.batch = static_cast<int>(parse_int(k, v)); }},
          {"lr", [&](auto& k, auto& v) { cfg.train.lr = parse_double(k, v); }},
      }},
      {"attack", {
          {"mode", [&](auto&, auto& v) { cfg.attack.mode = parse_attack_mode(trim(v)); }},
          {"alpha", [&](auto& k, auto& v) { cfg.attack.alpha = parse_double(k, v); }},
          {"tau", [&](auto& k, auto& v) { cfg.attack.tau = parse_double(k, v); }},
          {"beta", [&](auto& k, auto& v) { cfg.attack.beta = parse_double(k, v); }},
          {"iterations", [&](auto& k, auto& v) { cfg.attack.n_iters = static_cast<int>(parse_int(k, v)); }},
          {"optimizer", [&](auto&, auto& v) { cfg.attack.optimizer = parse_optimizer(trim(v)); }},
          {"random_init", [&](auto& k, auto& v) { cfg.attack.random_init = parse_bool(k, v); }},
      }},
      {"scenario", {
          {"edits", [&](auto& k, auto& v) { cfg.scenario.k = static_cast<int>(parse_int(k, v)); }},
          {"edit_seconds", [&](auto& k, auto& v) { cfg.scenario.edit_seconds = parse_double(k, v); }},
          {"eligibility", [&](auto& k, auto& v) { cfg.scenario.eligibility = parse_double(k, v); }},
          {"count", [&](auto& k, auto& v) { cfg.scenarios = parse_count(k, v); }},
      }},
      {"defense", {
          {"kinds", [&](auto&, auto& v) {
             cfg.defenses.clear();
             for (const auto& s : split_list(v)) cfg.defenses.push_back(parse_defense(s));
           }},
          {"down_rate", [&](auto& k, auto& v) { cfg.defense.down_rate = static_cast<int>(parse_int(k, v)); }},
          {"sigma", [&](auto& k, auto& v) { cfg.defense.sigma = parse_double(k, v); }},
          {"window", [&](auto& k, auto& v) { cfg.defense.window = static_cast<int>(parse_int(k, v)); }},
          {"lowpass", [&](auto& k, auto& v) { cfg.defense.lowpass = parse_bool(k, v); }},
      }},
      {"sweep", {
          {"parameter", [&](auto&, auto& v) { cfg.sweep_parameter = trim(v); }},
          {"values", [&](auto& k, auto& v) {
             cfg.sweep_values.clear();
             for (const auto& s : split_list(v)) cfg.sweep_values.push_back(parse_double(k, s));
           }},
      }},
      {"scale", {
          {"k_values", [&](auto& k, auto& v) {
             cfg.scale_k.clear();
             for (const auto& s : split_list(v)) cfg.scale_k.push_back(static_cast<int>(parse_int(k, s)));
           }},
          {"edit_seconds", [&](auto& k, auto& v) { cfg.scale_edit_seconds = parse_double(k, v); }},
      }},
  };

  auto apply = [&](const std::string& section, const std::string& key, const std::string& value) {
    const auto& keys = schema.at(section);
    const auto it = keys.find(key);
    const std::string name = section.empty() ? key : section + "." + key;
    if (it == keys.end()) throw ValidationError("unknown config key '" + name + "'");
    it->second(name, value);
  };

  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      apply("", name, node.data());
      continue;
    }
    if (!schema.count(name) || name.empty()) throw ValidationError("unknown config section [" + name + "]");
    for (const auto& [key, leaf] : node) apply(name, key, leaf.data());
  }
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<LabeledExample> to_examples(const std::vector<DatasetEntry>& entries,
                                        const MelFrontendConfig& fe) {
  std::vector<LabeledExample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back({frontend(e.audio, fe).frames, e.label.active});
  return out;
}

FrameScores evaluate_frames(const ModelParams& params, const std::vector<LabeledExample>& examples) {
  FrameScores total;
  for (const auto& ex : examples) total += score_frames(binarize(forward(params, ex.mel)), ex.labels);
  return total;
}

void cmd_synth(const ExperimentConfig& cfg, const Layout& out, const Logger& log) {
  cfg.validate();
  claim_dir(out.dataset());
  const std::pair<const char*, std::size_t> splits[] = {
      {"train", cfg.train_scenes}, {"val", cfg.val_scenes}, {"test", cfg.test_scenes}};
  std::uint64_t stream = 100;
  for (const auto& [name, count] : splits) {
    const auto entries = make_dataset(derive_seed(cfg.seed, {stream++}), count, cfg.scene);
    write_dataset(entries, cfg.scene.frontend, out.dataset() / name);
    say(log, "synth: wrote " + std::to_string(count) + " " + name + " scenes");
  }
  write_text(out.dataset() / "config.ini.txt", cfg.canonical());
}

void cmd_train(const ExperimentConfig& cfg, const Layout& out, const Logger& log) {
  cfg.validate();
  require_file(out.dataset() / "train", "run synth first");
  require_file(out.dataset() / "val", "run synth first");
  const auto train_set = to_examples(load_dataset(out.dataset() / "train"), cfg.scene.frontend);
  const auto val_set = to_examples(load_dataset(out.dataset() / "val"), cfg.scene.frontend);
  claim_dir(out.model());

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const TrainResult result = train(ModelParams::initialize(derive_seed(cfg.seed, {200})), train_set, tc,
                                   [&](int epoch, double loss) {
                                     say(log, "train: epoch " + std::to_string(epoch + 1) + " loss " + num(loss));
                                   });
  save_checkpoint(result.params, out.checkpoint());

  Csv history("config_hash,seed,epoch,loss");
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    history.row(prefix(cfg) + "," + std::to_string(e + 1) + "," + num(result.epoch_loss[e]));
  }
  history.save(out.model() / "loss_history.csv");

  const FrameScores scores = evaluate_frames(result.params, val_set);
  Csv val("config_hash,seed,f1,tp,fp,fn");
  val.row(prefix(cfg) + "," + format_ratio(scores.f1()) + "," + std::to_string(scores.tp) + "," +
          std::to_string(scores.fp) + "," + std::to_string(scores.fn));
  val.save(out.model() / "validation.csv");
  say(log, "train: validation micro-F1 " + format_ratio(scores.f1()));
}

void cmd_attack(const ExperimentConfig& cfg, const Layout& out, const Logger& log) {
  cfg.validate();
  const ModelParams params = load_model(out);
  const auto scenes = load_campaign_scenes(out);
  claim_dir(out.attack());

  const CampaignResult campaign = run_campaign(params, scenes, campaign_config(cfg), log);
  const std::string mode = to_string(cfg.attack.mode);
  const std::string setting = mode + "," + num(cfg.attack.alpha) + "," + num(cfg.attack.tau) + "," +
                              std::to_string(cfg.scenario.k) + "," + num(cfg.scenario.edit_seconds);

  Csv runs("config_hash,seed,scenario,mode,alpha,tau,k,edit_seconds," + metrics_csv_header());
  for (const auto& run : campaign.runs) {
    const auto dir = out.attack() / "runs" / run.scenario.id;
    std::filesystem::create_directories(dir);
    save_wav(run.result.adversarial, dir / "adversarial.wav");
    save_wav(clamp_unit(run.result.delta), dir / "delta.wav");
    Json meta;
    meta["scenario"] = run.scenario.id;
    meta["scene_index"] = run.scenario.scene_index;
    meta["config_hash"] = cfg.hash();
    meta["seed"] = cfg.seed;
    meta["mode"] = mode;
    meta["alpha"] = cfg.attack.alpha;
    meta["effective_alpha"] = cfg.attack.effective_alpha();
    meta["tau"] = cfg.attack.tau;
    meta["beta"] = cfg.attack.beta;
    meta["optimizer"] = to_string(cfg.attack.optimizer);
    meta["iterations"] = run.result.iterations_run;
    meta["edits"] = Json::array();
    for (const auto& e : run.scenario.edits) meta["edits"].push_back(edit_json(e));
    meta["target_pairs"] = run.result.target.region.size();
    meta["mask_density"] = run.result.mask.density();
    meta["budget_ok"] = budget_holds(run.result);
    meta["loss_trace"] = Json::array();
    for (const auto& p : run.result.loss_trace) meta["loss_trace"].push_back({p.total, p.adv, p.pre});
    meta["report"] = to_json(run.report);
    write_text(dir / "metadata.json", meta.dump(2) + "\n");
    runs.row(prefix(cfg) + "," + run.scenario.id + "," + setting + "," + metrics_csv_fields(run.report));
  }
  runs.save(out.attack() / "runs.csv");

  Csv agg("config_hash,seed,mode,alpha,tau,k,edit_seconds,runs,skipped,infinite_snr_runs," +
          metrics_csv_header());
  agg.row(prefix(cfg) + "," + setting + "," + campaign_fields(campaign));
  agg.save(out.attack() / "aggregate.csv");
  say(log, "attack: " + std::to_string(campaign.runs.size()) + " runs, EP " +
               format_ratio(campaign.aggregate.ep) + ", ASR " + format_ratio(campaign.aggregate.asr));
}

void cmd_defend(const ExperimentConfig& cfg, const Layout& out, const Logger& log) {
  cfg.validate();
  const ModelParams params = load_model(out);
  require_file(out.attack() / "runs", "run attack first");
  const auto scenes = load_campaign_scenes(out);
  const MelFrontendConfig& fe = cfg.scene.frontend;

  std::vector<std::filesystem::path> run_dirs;
  for (const auto& d : std::filesystem::directory_iterator(out.attack() / "runs"))
    if (d.is_directory()) run_dirs.push_back(d.path());
  std::sort(run_dirs.begin(), run_dirs.end());
  if (run_dirs.empty()) throw IoError("no attack runs under " + (out.attack() / "runs").string());

  std::vector<AttackResult> results;
  std::vector<std::string> ids;
  for (const auto& dir : run_dirs) {
    std::ifstream in(dir / "metadata.json");
    if (!in) throw IoError("missing " + (dir / "metadata.json").string());
    Json meta;
    try {
      meta = Json::parse(in);
    } catch (const Json::exception& e) {
      throw FormatError("bad metadata in " + dir.string() + ": " + e.what());
    }
    const std::string id = meta.at("scenario").get<std::string>();
    const auto it = std::find_if(scenes.begin(), scenes.end(), [&](const auto& s) { return s.id == id; });
    if (it == scenes.end()) throw IoError("attack run " + id + " has no matching test scene");
    std::vector<TargetEdit> edits;
    for (const auto& e : meta.at("edits")) edits.push_back(edit_from_json(e));
    const AttackMode mode = parse_attack_mode(meta.at("mode").get<std::string>());

    const Waveform& clean = it->audio;
    Waveform adv = load_wav(dir / "adversarial.wav");
    Waveform delta = load_wav(dir / "delta.wav");
    EventPosteriors clean_post = forward(params, frontend(clean, fe));
    EventActivityMatrix clean_act = binarize(clean_post);
    EventPosteriors adv_post = forward(params, frontend(adv, fe));
    EventActivityMatrix adv_act = binarize(adv_post);
    TargetSpec target = build_target(edits, clean_act, fe);
    PerturbationMask mask = init_mask(edits, mode, clean.size(), fe);
    results.push_back(AttackResult{clean, std::move(adv), std::move(delta), std::move(mask), edits,
                                   std::move(target), {}, meta.at("iterations").get<int>(),
                                   std::move(clean_post), std::move(adv_post), std::move(clean_act),
                                   std::move(adv_act), meta.at("tau").get<double>()});
    ids.push_back(id);
  }

  claim_dir(out.defend());
  Csv summary("config_hash,seed,defense,down_rate,sigma,window,runs,infinite_snr_runs," +
              metrics_csv_header());
  Csv per_run("config_hash,seed,defense,scenario," + metrics_csv_header());
  for (auto kind : cfg.defenses) {
    DefenseConfig d = cfg.defense;
    d.kind = kind;
    const DefenseEvaluation ev = evaluate_under_defense(params, results, d, derive_seed(cfg.seed, {400}), fe);
    summary.row(prefix(cfg) + "," + to_string(kind) + "," + std::to_string(d.down_rate) + "," + num(d.sigma) +
                "," + std::to_string(d.window) + "," + std::to_string(ev.aggregate.runs) + "," +
                std::to_string(ev.aggregate.infinite_snr_runs) + "," + metrics_csv_fields(ev.aggregate));
    for (std::size_t i = 0; i < ev.runs.size(); ++i) {
      per_run.row(prefix(cfg) + "," + to_string(kind) + "," + ids[i] + "," + metrics_csv_fields(ev.runs[i]));
    }
    say(log, "defend: " + to_string(kind) + " ASR " + format_ratio(ev.aggregate.asr) + ", UER " +
                 format_ratio(ev.aggregate.uer));
  }
  summary.save(out.defend() / "defense.csv");
  per_run.save(out.defend() / "defense_runs.csv");
}

void cmd_sweep(const ExperimentConfig& cfg, const Layout& out, const std::string& parameter,
               const std::vector<double>& values, const Logger& log) {
  cfg.validate();
  if (parameter != "alpha" && parameter != "tau") throw ValidationError("sweep parameter must be alpha or tau");
  if (values.empty()) throw ValidationError("sweep needs at least one value");
  const ModelParams params = load_model(out);
  const auto scenes = load_campaign_scenes(out);
  claim_dir(out.sweep(parameter));

  Csv csv("config_hash,seed,parameter,value,mode,alpha,tau,runs,skipped,infinite_snr_runs," +
          metrics_csv_header());
  for (double v : values) {
    CampaignConfig cc = campaign_config(cfg);
    (parameter == "alpha" ? cc.attack.alpha : cc.attack.tau) = v;
    const CampaignResult r = run_campaign(params, scenes, cc, log);
    csv.row(prefix(cfg) + "," + parameter + "," + num(v) + "," + to_string(cc.attack.mode) + "," +
            num(cc.attack.alpha) + "," + num(cc.attack.tau) + "," + campaign_fields(r));
    say(log, "sweep: " + parameter + "=" + num(v) + " ASR " + format_ratio(r.aggregate.asr) + ", EP " +
                 format_ratio(r.aggregate.ep));
  }
  csv.save(out.sweep(parameter) / "sweep.csv");
}

void cmd_scale_edits(const ExperimentConfig& cfg, const Layout& out, const std::vector<int>& k_values,
                     const Logger& log) {
  cfg.validate();
  if (k_values.empty()) throw ValidationError("scale-edits needs at least one k");
  for (int k : k_values)
    if (k < 1 || k > 10) throw ValidationError("k values must be in [1, 10]");
  const ModelParams params = load_model(out);
  const auto scenes = load_campaign_scenes(out);
  claim_dir(out.scale());

  Csv csv("config_hash,seed,k,edit_seconds,runs,skipped,infinite_snr_runs," + metrics_csv_header());
  for (int k : k_values) {
    CampaignConfig cc = campaign_config(cfg);
    cc.scenario.k = k;
    cc.scenario.edit_seconds = cfg.scale_edit_seconds;
    const CampaignResult r = run_campaign(params, scenes, cc, log);
    csv.row(prefix(cfg) + "," + std::to_string(k) + "," + num(cfg.scale_edit_seconds) + "," + campaign_fields(r));
    say(log, "scale-edits: k=" + std::to_string(k) + " EP " + format_ratio(r.aggregate.ep));
  }
  csv.save(out.scale() / "scale.csv");
}

}  // namespace sedattack
