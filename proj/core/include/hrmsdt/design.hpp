#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hrmsdt {

struct CaseInfo {
  std::string id;
  std::string label;
};

struct ThetaGroupInfo {
  std::string id;
  std::string label;
};

// One scored item. All indices are 1-based, matching the on-disk format.
struct ItemSpec {
  std::string id;
  int case_index = 0;        // q(l) in 1..C
  int theta_group = 0;       // g(l) in 1..G
  int threshold_group = 0;   // t(l) in 1..T
  Eigen::VectorXd loading;   // unit-normalized after ingest
  bool universal = false;
};

// Measurement design: dimensions, cases, theta-groups and the item map.
// Immutable once validated; shared read-only across chains.
class Blueprint {
 public:
  int n_dims = 0;        // P
  int n_categories = 5;  // fixed rating scale; K = n_categories - 1
  std::vector<CaseInfo> cases;
  std::vector<ThetaGroupInfo> theta_groups;
  std::vector<ItemSpec> items;

  int n_cases() const { return static_cast<int>(cases.size()); }
  int n_groups() const { return static_cast<int>(theta_groups.size()); }
  int n_items() const { return static_cast<int>(items.size()); }
  int n_threshold_groups() const { return n_threshold_groups_; }
  int n_boundaries() const { return n_categories - 1; }

  // 0-based item lookup by id; -1 when absent.
  int item_index(const std::string& id) const;

  // Normalizes loadings, derives T, checks every structural invariant.
  // Normalization deltas > 1e-6 and soft issues are appended to `warnings`.
  void validate(std::vector<std::string>* warnings = nullptr);

 private:
  int n_threshold_groups_ = 0;
  std::vector<std::pair<std::string, int>> id_index_;  // sorted by id
};

Blueprint load_blueprint(const std::filesystem::path& path,
                         std::vector<std::string>* warnings = nullptr);
void save_blueprint(const Blueprint& bp, const std::filesystem::path& path);

// One (learner, rater, item) cell. `rating` is set iff `applicable`.
struct RatingRecord {
  int learner = 0;  // i in 1..N
  int rater = 0;    // j in 1..J
  int item = 0;     // 0-based blueprint item index
  bool applicable = false;
  std::optional<int> rating;  // 1..5
};

// All raters' entries for one (learner, item) transcript cell.
struct TranscriptCell {
  int learner = 0;
  int item = 0;
  // (rater, rating) pairs for applicable records only
  std::vector<std::pair<int, int>> scored;
  int n_gated = 0;  // records with applicable=0
};

class RatingsDataset {
 public:
  std::vector<RatingRecord> records;
  int n_learners = 0;  // N
  int n_raters = 0;    // J
  int n_items = 0;     // L, from the blueprint

  // Derived index for likelihood sweeps: one entry per (learner, item)
  // pair present in the data, grouped so Stage-1 work is shared.
  const std::vector<TranscriptCell>& cells() const { return cells_; }

  // Gate counts per (case, theta-group) cell, row-major [q][g], 0-based.
  const Eigen::MatrixXi& gate_applicable() const { return gate_n1_; }
  const Eigen::MatrixXi& gate_inapplicable() const { return gate_n0_; }

  long long n_applicable() const { return n_applicable_; }

  static RatingsDataset from_records(const Blueprint& bp, std::vector<RatingRecord> records,
                                     bool validate = true,
                                     std::vector<std::string>* warnings = nullptr);

  // Rebuild the derived index after direct mutation of `records`.
  void reindex(const Blueprint& bp, bool validate = true,
               std::vector<std::string>* warnings = nullptr);

 private:
  std::vector<TranscriptCell> cells_;
  Eigen::MatrixXi gate_n1_;
  Eigen::MatrixXi gate_n0_;
  long long n_applicable_ = 0;
};

RatingsDataset load_ratings(const std::filesystem::path& path, const Blueprint& bp,
                            std::vector<std::string>* warnings = nullptr);
void save_ratings(const RatingsDataset& ds, const Blueprint& bp,
                  const std::filesystem::path& path);

}  // namespace hrmsdt
