#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tetradat/attack.hpp"
#include "tetradat/desk.hpp"
#include "tetradat/model.hpp"

namespace tetradat {

/// Invalid or unresolvable campaign configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while running a campaign (CLI exit code 1).
class CampaignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CampaignSpec {
  /// "synthetic" or a labeled image folder (see desk::load_labeled_folder).
  std::string images = "synthetic";
  std::uint64_t synthetic_seed = desk::kEvalDataSeed;
  std::size_t synthetic_count = 100;
  /// "builtin:<weights.nnw>" or "bridge:<shell command>".
  std::string attacked;
  std::string auxiliary;
  AttackConfig attack;
  std::filesystem::path output = "results";
  /// The optimizer seed of image i is seed + i.
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t retries = 2;
};

/// Parses the key = value campaign format documented in
/// docs/campaign_config.md. Relative paths resolve against `base_dir`.
CampaignSpec parse_campaign_config(std::istream& in,
                                   const std::filesystem::path& base_dir);
CampaignSpec load_campaign_config(const std::filesystem::path& path);

/// Resolves an endpoint descriptor to a classifier.
std::unique_ptr<Classifier> open_classifier(const std::string& descriptor);

struct NamedImage {
  std::string name;
  Image image;
  int label = 0;
};

std::vector<NamedImage> campaign_images(const CampaignSpec& spec);

/// One line of results.jsonl.
struct AttackRecord {
  std::string image;
  bool success = false;
  std::string adversarial;  // file name of the adversarial image
  int original_class = 0;
  int adversarial_class = 0;
  double final_epsilon = 0.0;
  std::size_t queries = 0;
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

nlohmann::ordered_json to_json(const AttackRecord& record);
AttackRecord record_from_json(const nlohmann::json& j);
AttackRecord make_record(const std::string& image_name, const AttackResult& result);

struct CampaignSummary {
  std::size_t images_attempted = 0;
  std::size_t images_skipped = 0;
  std::optional<double> success_rate;
  std::optional<double> mean_l1;
  std::optional<double> mean_l2;
  std::optional<double> mean_queries;
};

/// Rates over attempted images; means over successful attacks only.
CampaignSummary summarize(const std::vector<AttackRecord>& records,
                          std::size_t skipped);
nlohmann::ordered_json to_json(const CampaignSummary& summary);

std::vector<AttackRecord> read_records(const std::filesystem::path& jsonl);

/// Attacks every image the two models classify correctly, appending one
/// record per image to <output>/results.jsonl and writing summary.json.
/// Images already recorded in the output directory are not attacked again.
CampaignSummary run_campaign(const CampaignSpec& spec);

struct ReportOutcome {
  std::size_t panels = 0;
  std::vector<std::string> omitted;
};

/// Writes <results>/report/: a four-panel image per record (original,
/// attribution, 10x perturbation, adversarial), index.md with the predicted
/// classes, and summary.tsv.
ReportOutcome emit_report(const std::filesystem::path& results_dir);

/// |adversarial - original| * 10, clamped to [0, 1].
Image amplified_perturbation(const Image& original, const Image& adversarial,
                             double gain = 10.0);

}  // namespace tetradat
