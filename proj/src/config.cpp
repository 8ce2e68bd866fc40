#include "rotla/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace rotla::config {

namespace {

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

using Section = std::map<std::string, Entry>;

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

class Binder {
 public:
  explicit Binder(std::map<std::string, Section> sections) : sections_(std::move(sections)) {}

  bool has(const std::string& section, const std::string& key) {
    auto s = sections_.find(section);
    if (s == sections_.end()) return false;
    return s->second.find(key) != s->second.end();
  }

  template <typename T, typename Parse>
  void bind(const std::string& section, const std::string& key, T& out, Parse parse) {
    auto s = sections_.find(section);
    if (s == sections_.end()) return;
    auto e = s->second.find(key);
    if (e == s->second.end()) return;
    e->second.used = true;
    try {
      out = parse(e->second.value);
    } catch (const std::exception& ex) {
      fail(e->second.line, "bad value for " + section + "." + key + ": " + ex.what());
    }
  }

  void finish() {
    for (const auto& [sname, section] : sections_)
      for (const auto& [key, entry] : section)
        if (!entry.used) fail(entry.line, "unknown key \"" + key + "\" in section [" + sname + "]");
  }

 private:
  std::map<std::string, Section> sections_;
};

double parse_double(const std::string& v) {
  std::size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::runtime_error("trailing characters");
  return x;
}

std::int64_t parse_int(const std::string& v) {
  std::size_t pos = 0;
  const long long x = std::stoll(v, &pos);
  if (pos != v.size()) throw std::runtime_error("trailing characters");
  return x;
}

std::uint64_t parse_u64(const std::string& v) {
  std::size_t pos = 0;
  const unsigned long long x = std::stoull(v, &pos);
  if (pos != v.size()) throw std::runtime_error("trailing characters");
  return x;
}

bool parse_flag(const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw std::runtime_error("expected on/off");
}

template <typename T, typename P>
std::vector<T> parse_list(const std::string& v, P parse_one) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_one(item));
  }
  if (out.empty()) throw std::runtime_error("empty list");
  return out;
}

std::string mixer_name(model::MixerKind k) {
  switch (k) {
    case model::MixerKind::linear_attn: return "linear-attn";
    case model::MixerKind::gla: return "gla";
    case model::MixerKind::delta: return "delta";
    case model::MixerKind::softmax: return "softmax";
  }
  return "?";
}

model::MixerKind parse_mixer(const std::string& v) {
  if (v == "linear-attn") return model::MixerKind::linear_attn;
  if (v == "gla") return model::MixerKind::gla;
  if (v == "delta") return model::MixerKind::delta;
  if (v == "softmax") return model::MixerKind::softmax;
  throw std::runtime_error("expected linear-attn|gla|delta|softmax");
}

std::string posenc_name(model::PosencKind k) {
  switch (k) {
    case model::PosencKind::nope: return "nope";
    case model::PosencKind::rope: return "rope";
    case model::PosencKind::selective_rope: return "selective-rope";
  }
  return "?";
}

model::PosencKind parse_posenc(const std::string& v) {
  if (v == "nope") return model::PosencKind::nope;
  if (v == "rope") return model::PosencKind::rope;
  if (v == "selective-rope") return model::PosencKind::selective_rope;
  throw std::runtime_error("expected nope|rope|selective-rope");
}

std::string qknorm_name(model::QkNorm k) {
  switch (k) {
    case model::QkNorm::automatic: return "auto";
    case model::QkNorm::on: return "on";
    case model::QkNorm::off: return "off";
  }
  return "?";
}

model::QkNorm parse_qknorm(const std::string& v) {
  if (v == "auto") return model::QkNorm::automatic;
  if (v == "on") return model::QkNorm::on;
  if (v == "off") return model::QkNorm::off;
  throw std::runtime_error("expected auto|on|off");
}

std::string schedule_name(posenc::ScheduleKind k) {
  return k == posenc::ScheduleKind::rope_exponential ? "rope-exponential" : "tan-half-angle";
}

posenc::ScheduleKind parse_schedule(const std::string& v) {
  if (v == "rope-exponential") return posenc::ScheduleKind::rope_exponential;
  if (v == "tan-half-angle") return posenc::ScheduleKind::tan_half_angle;
  throw std::runtime_error("expected rope-exponential|tan-half-angle");
}

std::string task_name(tasks::TaskKind k) {
  switch (k) {
    case tasks::TaskKind::parity: return "parity";
    case tasks::TaskKind::a3: return "a3";
    case tasks::TaskKind::mqar: return "mqar";
    case tasks::TaskKind::copy: return "copy";
  }
  return "?";
}

tasks::TaskKind parse_task(const std::string& v) {
  if (v == "parity") return tasks::TaskKind::parity;
  if (v == "a3") return tasks::TaskKind::a3;
  if (v == "mqar") return tasks::TaskKind::mqar;
  if (v == "copy") return tasks::TaskKind::copy;
  throw std::runtime_error("expected parity|a3|mqar|copy");
}

}  // namespace

model::ModelConfig ExperimentConfig::resolved_model() const {
  model::ModelConfig m = model;
  m.vocab_size = task.vocab_size();
  return m;
}

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, Section> sections;
  const std::map<std::string, bool> known = {
      {"model", true}, {"posenc", true}, {"task", true}, {"train", true}, {"run", true}};
  std::istringstream is(text);
  std::string line;
  std::string current;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(line_no, "malformed section header");
      current = trim(s.substr(1, s.size() - 2));
      if (known.find(current) == known.end()) fail(line_no, "unknown section [" + current + "]");
      sections[current];
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    if (current.empty()) fail(line_no, "key before any section header");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) fail(line_no, "empty key");
    auto [it, inserted] = sections[current].emplace(key, Entry{value, line_no, false});
    if (!inserted) fail(line_no, "duplicate key \"" + key + "\"");
  }

  ExperimentConfig cfg;
  Binder b(std::move(sections));

  b.bind("model", "mixer", cfg.model.mixer, parse_mixer);
  b.bind("model", "posenc", cfg.model.posenc, parse_posenc);
  b.bind("model", "model_dim", cfg.model.model_dim, parse_int);
  b.bind("model", "num_heads", cfg.model.num_heads, parse_int);
  b.bind("model", "num_layers", cfg.model.num_layers, parse_int);
  b.bind("model", "mlp", cfg.model.mlp, parse_flag);
  b.bind("model", "mlp_mult", cfg.model.mlp_mult, parse_int);
  b.bind("model", "short_conv_width", cfg.model.short_conv_width, parse_int);
  b.bind("model", "head_norm", cfg.model.head_norm, parse_flag);
  b.bind("model", "qk_norm", cfg.model.qk_norm, parse_qknorm);
  b.bind("model", "gate_c", cfg.model.gate_c, parse_double);
  b.bind("model", "gate_tau", cfg.model.gate_tau, parse_double);
  b.bind("model", "rope_eps", cfg.model.rope_eps, parse_double);

  b.bind("posenc", "conv_width", cfg.model.srope.conv_width, parse_int);
  b.bind("posenc", "schedule", cfg.model.srope.schedule.kind, parse_schedule);
  b.bind("posenc", "eps", cfg.model.srope.schedule.eps, parse_double);
  b.bind("posenc", "phase_gate", cfg.model.srope.phase_gate, parse_flag);
  b.bind("posenc", "bias", cfg.model.srope.bias, parse_flag);
  b.bind("posenc", "weight_norm", cfg.model.srope.weight_norm, parse_flag);
  b.bind("posenc", "temps_learnable", cfg.model.srope.temps_learnable, parse_flag);
  b.bind("posenc", "conv_diff_init", cfg.model.srope.conv_diff_init, parse_flag);

  b.bind("task", "kind", cfg.task.kind, parse_task);
  b.bind("task", "train_min_len", cfg.task.train_min_len, parse_int);
  b.bind("task", "train_max_len", cfg.task.train_max_len, parse_int);
  b.bind("task", "eval_max_len", cfg.task.eval_max_len, parse_int);
  b.bind("task", "num_kv", cfg.task.num_kv, parse_int);
  b.bind("task", "num_keys", cfg.task.num_keys, parse_int);
  b.bind("task", "num_values", cfg.task.num_values, parse_int);
  b.bind("task", "copy_vocab", cfg.task.copy_vocab, parse_int);

  b.bind("train", "lr", cfg.train.lr, parse_double);
  b.bind("train", "beta1", cfg.train.beta1, parse_double);
  b.bind("train", "beta2", cfg.train.beta2, parse_double);
  b.bind("train", "weight_decay", cfg.train.weight_decay, parse_double);
  b.bind("train", "eps", cfg.train.eps, parse_double);
  b.bind("train", "clip_norm", cfg.train.clip_norm, parse_double);
  b.bind("train", "warmup_fraction", cfg.train.warmup_fraction, parse_double);
  b.bind("train", "lr_start", cfg.train.lr_start, parse_double);
  b.bind("train", "lr_end", cfg.train.lr_end, parse_double);
  b.bind("train", "steps", cfg.train.steps, parse_int);
  b.bind("train", "batch_size", cfg.train.batch_size, parse_int);
  b.bind("train", "eval_every", cfg.train.eval_every, parse_int);
  b.bind("train", "eval_batches", cfg.train.eval_batches, parse_int);
  b.bind("train", "eval_batch_size", cfg.train.eval_batch_size, parse_int);
  b.bind("train", "eval_lengths", cfg.train.eval_lengths,
         [](const std::string& v) { return parse_list<std::int64_t>(v, parse_int); });
  b.bind("train", "seeds", cfg.train.seeds,
         [](const std::string& v) { return parse_list<std::uint64_t>(v, parse_u64); });
  b.bind("train", "early_stop_acc", cfg.train.early_stop_acc, parse_double);
  b.bind("train", "early_stop_lengths", cfg.train.early_stop_lengths,
         [](const std::string& v) { return parse_list<std::int64_t>(v, parse_int); });
  b.bind("train", "early_stop_accs", cfg.train.early_stop_accs,
         [](const std::string& v) { return parse_list<double>(v, parse_double); });

  b.bind("run", "run_id", cfg.run_id, [](const std::string& v) { return v; });
  b.bind("run", "out_dir", cfg.out_dir, [](const std::string& v) { return v; });
  b.bind("run", "root_seed", cfg.root_seed, parse_u64);
  b.bind("run", "precision", cfg.precision, [](const std::string& v) {
    if (v == "f64") return ad::Precision::f64;
    if (v == "f32") return ad::Precision::f32;
    throw std::runtime_error("expected f32|f64");
  });

  b.finish();
  cfg.train.precision = cfg.precision;
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is.good()) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string resolved_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  auto flag = [](bool b) { return b ? "on" : "off"; };
  os << "[model]\n";
  os << "mixer = " << mixer_name(cfg.model.mixer) << "\n";
  os << "posenc = " << posenc_name(cfg.model.posenc) << "\n";
  os << "model_dim = " << cfg.model.model_dim << "\n";
  os << "num_heads = " << cfg.model.num_heads << "\n";
  os << "num_layers = " << cfg.model.num_layers << "\n";
  os << "mlp = " << flag(cfg.model.mlp) << "\n";
  os << "mlp_mult = " << cfg.model.mlp_mult << "\n";
  os << "short_conv_width = " << cfg.model.short_conv_width << "\n";
  os << "head_norm = " << flag(cfg.model.head_norm) << "\n";
  os << "qk_norm = " << qknorm_name(cfg.model.qk_norm) << "\n";
  os << "gate_c = " << cfg.model.gate_c << "\n";
  os << "gate_tau = " << cfg.model.gate_tau << "\n";
  os << "rope_eps = " << cfg.model.rope_eps << "\n";
  os << "\n[posenc]\n";
  os << "conv_width = " << cfg.model.srope.conv_width << "\n";
  os << "schedule = " << schedule_name(cfg.model.srope.schedule.kind) << "\n";
  os << "eps = " << cfg.model.srope.schedule.eps << "\n";
  os << "phase_gate = " << flag(cfg.model.srope.phase_gate) << "\n";
  os << "bias = " << flag(cfg.model.srope.bias) << "\n";
  os << "weight_norm = " << flag(cfg.model.srope.weight_norm) << "\n";
  os << "temps_learnable = " << flag(cfg.model.srope.temps_learnable) << "\n";
  os << "conv_diff_init = " << flag(cfg.model.srope.conv_diff_init) << "\n";
  os << "\n[task]\n";
  os << "kind = " << task_name(cfg.task.kind) << "\n";
  os << "train_min_len = " << cfg.task.train_min_len << "\n";
  os << "train_max_len = " << cfg.task.train_max_len << "\n";
  os << "eval_max_len = " << cfg.task.eval_max_len << "\n";
  os << "num_kv = " << cfg.task.num_kv << "\n";
  os << "num_keys = " << cfg.task.num_keys << "\n";
  os << "num_values = " << cfg.task.num_values << "\n";
  os << "copy_vocab = " << cfg.task.copy_vocab << "\n";
  os << "\n[train]\n";
  os << "lr = " << cfg.train.lr << "\n";
  os << "beta1 = " << cfg.train.beta1 << "\n";
  os << "beta2 = " << cfg.train.beta2 << "\n";
  os << "weight_decay = " << cfg.train.weight_decay << "\n";
  os << "eps = " << cfg.train.eps << "\n";
  os << "clip_norm = " << cfg.train.clip_norm << "\n";
  os << "warmup_fraction = " << cfg.train.warmup_fraction << "\n";
  os << "lr_start = " << cfg.train.lr_start << "\n";
  os << "lr_end = " << cfg.train.lr_end << "\n";
  os << "steps = " << cfg.train.steps << "\n";
  os << "batch_size = " << cfg.train.batch_size << "\n";
  os << "eval_every = " << cfg.train.eval_every << "\n";
  os << "eval_batches = " << cfg.train.eval_batches << "\n";
  os << "eval_batch_size = " << cfg.train.eval_batch_size << "\n";
  auto list_i = [&os](const std::vector<std::int64_t>& xs) {
    for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  };
  if (!cfg.train.eval_lengths.empty()) {
    os << "eval_lengths = ";
    list_i(cfg.train.eval_lengths);
    os << "\n";
  }
  os << "seeds = ";
  for (std::size_t i = 0; i < cfg.train.seeds.size(); ++i) os << (i ? "," : "") << cfg.train.seeds[i];
  os << "\n";
  os << "early_stop_acc = " << cfg.train.early_stop_acc << "\n";
  if (!cfg.train.early_stop_lengths.empty()) {
    os << "early_stop_lengths = ";
    list_i(cfg.train.early_stop_lengths);
    os << "\n";
  }
  if (!cfg.train.early_stop_accs.empty()) {
    os << "early_stop_accs = ";
    for (std::size_t i = 0; i < cfg.train.early_stop_accs.size(); ++i)
      os << (i ? "," : "") << cfg.train.early_stop_accs[i];
    os << "\n";
  }
  os << "\n[run]\n";
  os << "run_id = " << cfg.run_id << "\n";
  os << "out_dir = " << cfg.out_dir << "\n";
  os << "root_seed = " << cfg.root_seed << "\n";
  os << "precision = " << (cfg.precision == ad::Precision::f64 ? "f64" : "f32") << "\n";
  return os.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = resolved_text(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace rotla::config
