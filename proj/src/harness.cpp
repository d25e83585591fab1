#include "tetradat/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "tetradat/bridge.hpp"

namespace tetradat {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("invalid value for '" + key + "': " + value);
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid value for '" + key + "': " + value);
  }
}

std::string resolve_path(const std::string& value, const fs::path& base) {
  const fs::path p(value);
  return p.is_absolute() ? p.string() : (base / p).lexically_normal().string();
}

std::string resolve_descriptor(const std::string& value, const fs::path& base) {
  if (value.rfind("builtin:", 0) == 0)
    return "builtin:" + resolve_path(value.substr(8), base);
  if (value.rfind("bridge:", 0) == 0) return value;
  throw ConfigError("endpoint must start with 'builtin:' or 'bridge:': " + value);
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw CampaignError("cannot append to " + path.string());
  out << line << '\n';
  if (!out) throw CampaignError("failed writing " + path.string());
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

CampaignSpec parse_campaign_config(std::istream& in, const fs::path& base_dir) {
  CampaignSpec spec;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "'");

    if (key == "images") {
      spec.images = value == "synthetic" ? value : resolve_path(value, base_dir);
    } else if (key == "synthetic_seed") {
      spec.synthetic_seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "synthetic_count") {
      spec.synthetic_count = parse_number<std::size_t>(key, value);
    } else if (key == "attacked") {
      spec.attacked = resolve_descriptor(value, base_dir);
    } else if (key == "auxiliary") {
      spec.auxiliary = resolve_descriptor(value, base_dir);
    } else if (key == "output") {
      spec.output = resolve_path(value, base_dir);
    } else if (key == "seed") {
      spec.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "workers") {
      spec.workers = parse_number<std::size_t>(key, value);
    } else if (key == "retries") {
      spec.retries = parse_number<std::size_t>(key, value);
    } else if (key == "d_hat") {
      spec.attack.d_hat = value == "auto" ? 0 : parse_number<std::size_t>(key, value);
    } else if (key == "epsilon0") {
      spec.attack.epsilon0 = parse_real(key, value);
    } else if (key == "budget") {
      spec.attack.budget = parse_number<std::size_t>(key, value);
    } else if (key == "attribution_steps") {
      spec.attack.attribution_steps = parse_number<std::size_t>(key, value);
    } else if (key == "baseline") {
      try {
        spec.attack.baseline = baseline_from_string(value);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "protes.K") {
      spec.attack.protes.K = parse_number<std::size_t>(key, value);
    } else if (key == "protes.k") {
      spec.attack.protes.k = parse_number<std::size_t>(key, value);
    } else if (key == "protes.k_gd") {
      spec.attack.protes.k_gd = parse_number<std::size_t>(key, value);
    } else if (key == "protes.lr") {
      spec.attack.protes.lr = parse_real(key, value);
    } else if (key == "protes.rank") {
      spec.attack.protes.rank = parse_number<std::size_t>(key, value);
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  if (spec.attacked.empty()) throw ConfigError("missing key 'attacked'");
  if (spec.auxiliary.empty()) throw ConfigError("missing key 'auxiliary'");
  if (spec.workers < 1) throw ConfigError("workers must be at least 1");
  try {
    spec.attack.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

CampaignSpec load_campaign_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  return parse_campaign_config(in, path.parent_path());
}

std::unique_ptr<Classifier> open_classifier(const std::string& descriptor) {
  if (descriptor.rfind("builtin:", 0) == 0) {
    try {
      return std::make_unique<DenseClassifier>(load_weights(descriptor.substr(8)));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("cannot load built-in model: ") + e.what());
    }
  }
  if (descriptor.rfind("bridge:", 0) == 0) {
    auto bridge = std::make_unique<BridgeClassifier>(descriptor.substr(7));
    try {
      bridge->info();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("bridge did not answer 'info': ") + e.what());
    }
    return bridge;
  }
  throw ConfigError("unknown endpoint descriptor: " + descriptor);
}

std::vector<NamedImage> campaign_images(const CampaignSpec& spec) {
  std::vector<NamedImage> out;
  if (spec.images == "synthetic") {
    for (std::size_t i = 0; i < spec.synthetic_count; ++i) {
      auto s = desk::synthetic_image(spec.synthetic_seed, i);
      char name[32];
      std::snprintf(name, sizeof name, "img_%04zu", i);
      out.push_back({name, std::move(s.image), s.label});
    }
    return out;
  }
  std::vector<desk::LabeledImage> data;
  try {
    data = desk::load_labeled_folder(spec.images);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%04zu", i);
    out.push_back({name, std::move(data[i].image), data[i].label});
  }
  return out;
}

nlohmann::ordered_json to_json(const AttackRecord& r) {
  nlohmann::ordered_json j;
  j["image"] = r.image;
  j["success"] = r.success;
  j["adversarial"] = r.adversarial;
  j["original_class"] = r.original_class;
  j["adversarial_class"] = r.adversarial_class;
  j["final_epsilon"] = r.final_epsilon;
  j["queries"] = r.queries;
  j["l1"] = r.l1;
  j["l2"] = r.l2;
  j["linf"] = r.linf;
  return j;
}

AttackRecord record_from_json(const nlohmann::json& j) {
  AttackRecord r;
  r.image = j.at("image").get<std::string>();
  r.success = j.at("success").get<bool>();
  r.adversarial = j.at("adversarial").get<std::string>();
  r.original_class = j.at("original_class").get<int>();
  r.adversarial_class = j.at("adversarial_class").get<int>();
  r.final_epsilon = j.at("final_epsilon").get<double>();
  r.queries = j.at("queries").get<std::size_t>();
  r.l1 = j.at("l1").get<double>();
  r.l2 = j.at("l2").get<double>();
  r.linf = j.at("linf").get<double>();
  return r;
}

AttackRecord make_record(const std::string& image_name, const AttackResult& result) {
  return {image_name,          result.success,        image_name + "_adv.png",
          result.original_class, result.adversarial_class, result.final_epsilon,
          result.queries,      result.l1,             result.l2,
          result.linf};
}

CampaignSummary summarize(const std::vector<AttackRecord>& records,
                          std::size_t skipped) {
  CampaignSummary s;
  s.images_attempted = records.size();
  s.images_skipped = skipped;
  if (records.empty()) return s;
  std::size_t wins = 0;
  double l1 = 0.0, l2 = 0.0, q = 0.0;
  for (const auto& r : records) {
    if (!r.success) continue;
    ++wins;
    l1 += r.l1;
    l2 += r.l2;
    q += static_cast<double>(r.queries);
  }
  s.success_rate = static_cast<double>(wins) / static_cast<double>(records.size());
  if (wins > 0) {
    s.mean_l1 = l1 / static_cast<double>(wins);
    s.mean_l2 = l2 / static_cast<double>(wins);
    s.mean_queries = q / static_cast<double>(wins);
  }
  return s;
}

nlohmann::ordered_json to_json(const CampaignSummary& s) {
  nlohmann::ordered_json j;
  j["images_attempted"] = s.images_attempted;
  j["images_skipped"] = s.images_skipped;
  j["success_rate"] = optional_json(s.success_rate);
  j["mean_l1"] = optional_json(s.mean_l1);
  j["mean_l2"] = optional_json(s.mean_l2);
  j["mean_queries"] = optional_json(s.mean_queries);
  return j;
}

std::vector<AttackRecord> read_records(const fs::path& jsonl) {
  std::vector<AttackRecord> out;
  std::ifstream in(jsonl);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw CampaignError("corrupt record in " + jsonl.string() + ": " + e.what());
    }
  }
  return out;
}

namespace {

std::set<std::string> read_skipped(const fs::path& path) {
  std::set<std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.contains("image")) out.insert(j["image"].get<std::string>());
  }
  return out;
}

struct ImageOutcome {
  std::optional<AttackResult> result;
  std::string skip_reason;
};

ImageOutcome attack_one(const NamedImage& item, const Classifier& attacked,
                        const Classifier& auxiliary, AttackConfig config,
                        std::size_t retries) {
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      if (attacked.predict(item.image).top_class != item.label)
        return {std::nullopt, "attacked model misclassifies"};
      if (auxiliary.predict(item.image).top_class != item.label)
        return {std::nullopt, "auxiliary model misclassifies"};
      QueryEndpoint endpoint(attacked);
      return {tetradat(endpoint, auxiliary, item.image, config), {}};
    } catch (const AttackRefused& e) {
      return {std::nullopt, e.what()};
    } catch (const TransportError& e) {
      if (attempt >= retries)
        throw CampaignError("endpoint failed on " + item.name + ": " + e.what());
      std::cerr << "retrying " << item.name << " after transport error: " << e.what()
                << '\n';
    }
  }
}

}  // namespace

CampaignSummary run_campaign(const CampaignSpec& spec) {
  auto attacked = open_classifier(spec.attacked);
  auto auxiliary = open_classifier(spec.auxiliary);
  if (!auxiliary->differentiable())
    throw ConfigError("auxiliary model must provide gradients");
  const auto images = campaign_images(spec);

  std::error_code ec;
  fs::create_directories(spec.output, ec);
  if (ec || !fs::is_directory(spec.output))
    throw ConfigError("output directory is not writable: " + spec.output.string());
  const auto results_path = spec.output / "results.jsonl";
  const auto skipped_path = spec.output / "skipped.jsonl";

  std::set<std::string> done;
  for (const auto& r : read_records(results_path)) done.insert(r.image);
  const auto skipped_before = read_skipped(skipped_path);
  done.insert(skipped_before.begin(), skipped_before.end());

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < images.size(); ++i)
    if (!done.contains(images[i].name)) todo.push_back(i);

  // Built-in models are immutable and thread-safe; bridges are serialized.
  const bool parallel = spec.workers > 1 &&
                        dynamic_cast<DenseClassifier*>(attacked.get()) != nullptr &&
                        dynamic_cast<DenseClassifier*>(auxiliary.get()) != nullptr;
  const std::size_t chunk = parallel ? spec.workers : 1;

  for (std::size_t start = 0; start < todo.size(); start += chunk) {
    const std::size_t end = std::min(start + chunk, todo.size());
    std::vector<std::future<ImageOutcome>> jobs;
    for (std::size_t j = start; j < end; ++j) {
      const auto i = todo[j];
      AttackConfig config = spec.attack;
      config.protes.seed = spec.seed + i;
      jobs.push_back(std::async(parallel ? std::launch::async : std::launch::deferred,
                                attack_one, std::cref(images[i]), std::cref(*attacked),
                                std::cref(*auxiliary), config, spec.retries));
    }
    for (std::size_t j = start; j < end; ++j) {
      const auto& item = images[todo[j]];
      auto outcome = jobs[j - start].get();
      if (!outcome.result) {
        nlohmann::ordered_json skip;
        skip["image"] = item.name;
        skip["reason"] = outcome.skip_reason;
        append_line(skipped_path, skip.dump());
        continue;
      }
      const auto& res = *outcome.result;
      save_image(spec.output / (item.name + "_orig.png"), item.image);
      save_image(spec.output / (item.name + "_adv.png"), res.adversarial);
      save_grayscale(spec.output / (item.name + "_attr.png"), res.attribution.height,
                     res.attribution.width, res.attribution.scores);
      append_line(results_path, to_json(make_record(item.name, res)).dump());
    }
  }

  const auto summary =
      summarize(read_records(results_path), read_skipped(skipped_path).size());
  std::ofstream out(spec.output / "summary.json", std::ios::binary | std::ios::trunc);
  out << to_json(summary).dump(2) << '\n';
  if (!out) throw CampaignError("failed writing summary.json");
  return summary;
}

Image amplified_perturbation(const Image& original, const Image& adversarial,
                             double gain) {
  if (!original.same_shape(adversarial))
    throw std::invalid_argument("perturbation needs images of the same shape");
  Image out(original.height(), original.width());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] = std::clamp(
        std::abs(adversarial.values()[i] - original.values()[i]) * gain, 0.0, 1.0);
  return out;
}

ReportOutcome emit_report(const fs::path& results_dir) {
  const auto results_path = results_dir / "results.jsonl";
  if (!fs::exists(results_path))
    throw CampaignError("no results.jsonl in " + results_dir.string());
  const auto records = read_records(results_path);
  const auto report_dir = results_dir / "report";
  fs::create_directories(report_dir);

  ReportOutcome outcome;
  std::ofstream index(report_dir / "index.md", std::ios::binary | std::ios::trunc);
  index << "# Attack report\n\n";
  for (const auto& r : records) {
    const auto orig_path = results_dir / (r.image + "_orig.png");
    const auto attr_path = results_dir / (r.image + "_attr.png");
    const auto adv_path = results_dir / r.adversarial;
    std::vector<std::string> missing;
    for (const auto& p : {orig_path, attr_path, adv_path})
      if (!fs::exists(p)) missing.push_back(p.filename().string());
    if (!missing.empty()) {
      std::string notice = r.image + ": missing";
      for (const auto& m : missing) notice += " " + m;
      std::cerr << "panel omitted, " << notice << '\n';
      index << "- panel omitted (" << notice << ")\n";
      outcome.omitted.push_back(r.image);
      continue;
    }
    const Image orig = load_image(orig_path);
    const Image attr = load_image(attr_path);
    const Image adv = load_image(adv_path);
    const Image pert = amplified_perturbation(orig, adv);
    const std::size_t gap = 2;
    const std::size_t h = orig.height(), w = orig.width();
    Image panel(h, 4 * w + 3 * gap, 1.0);
    const Image* parts[] = {&orig, &attr, &pert, &adv};
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t row = 0; row < h; ++row)
        for (std::size_t col = 0; col < w; ++col)
          for (std::size_t ch = 0; ch < 3; ++ch)
            panel.at(row, k * (w + gap) + col, ch) = parts[k]->at(row, col, ch);
    const auto panel_name = r.image + "_panel.png";
    save_image(report_dir / panel_name, panel);
    ++outcome.panels;
    index << "- " << r.image << ": original class " << r.original_class
          << ", adversarial class " << r.adversarial_class
          << (r.success ? " (success)" : " (failed)") << ", epsilon "
          << r.final_epsilon << ", queries " << r.queries << " ![" << r.image
          << "](" << panel_name << ")\n";
  }

  std::size_t skipped = read_skipped(results_dir / "skipped.jsonl").size();
  const auto summary = summarize(records, skipped);
  const auto j = to_json(summary);
  std::ofstream table(report_dir / "summary.tsv", std::ios::binary | std::ios::trunc);
  bool first = true;
  for (const auto& [key, _] : j.items()) {
    table << (first ? "" : "\t") << key;
    first = false;
  }
  table << '\n';
  first = true;
  for (const auto& [_, value] : j.items()) {
    table << (first ? "" : "\t") << value.dump();
    first = false;
  }
  table << '\n';
  return outcome;
}

}  // namespace tetradat
