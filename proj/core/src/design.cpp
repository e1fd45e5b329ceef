#include "hrmsdt/design.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hrmsdt/util.hpp"

namespace hrmsdt {

using nlohmann::json;

int Blueprint::item_index(const std::string& id) const {
  auto it = std::lower_bound(id_index_.begin(), id_index_.end(), id,
                             [](const auto& p, const std::string& key) { return p.first < key; });
  if (it == id_index_.end() || it->first != id) return -1;
  return it->second;
}

void Blueprint::validate(std::vector<std::string>* warnings) {
  if (n_dims < 1) throw validation_error("blueprint: dims must be >= 1");
  if (n_categories != 5)
    throw validation_error("blueprint: categories must be 5 (got " +
                           std::to_string(n_categories) + ")");
  if (cases.empty()) throw validation_error("blueprint: at least one case required");
  if (theta_groups.empty()) throw validation_error("blueprint: at least one theta_group required");
  if (items.empty()) throw validation_error("blueprint: at least one item required");

  const int C = n_cases();
  const int G = n_groups();

  id_index_.clear();
  id_index_.reserve(items.size());
  std::set<int> tg_seen;
  std::vector<bool> dim_covered(static_cast<std::size_t>(n_dims), false);

  for (std::size_t idx = 0; idx < items.size(); ++idx) {
    ItemSpec& item = items[idx];
    if (item.id.empty()) throw validation_error("blueprint: item with empty id");
    if (item.case_index < 1 || item.case_index > C)
      throw validation_error("blueprint: item '" + item.id + "' case index out of range");
    if (item.theta_group < 1 || item.theta_group > G)
      throw validation_error("blueprint: item '" + item.id + "' theta_group out of range");
    if (item.threshold_group < 1)
      throw validation_error("blueprint: item '" + item.id + "' threshold_group out of range");
    if (item.loading.size() != n_dims)
      throw validation_error("blueprint: item '" + item.id + "' loading length != dims");

    double norm = item.loading.norm();
    if (!(norm > 0.0))
      throw validation_error("blueprint: item '" + item.id + "' has empty (all-zero) loading");
    if (std::abs(norm - 1.0) > 1e-6 && warnings != nullptr) {
      warnings->push_back("item '" + item.id + "': loading renormalized (|a| was " +
                          format_double(norm) + ")");
    }
    if (std::abs(norm - 1.0) > 1e-12) item.loading /= norm;

    for (int p = 0; p < n_dims; ++p)
      if (item.loading[p] != 0.0) dim_covered[static_cast<std::size_t>(p)] = true;

    tg_seen.insert(item.threshold_group);
    id_index_.emplace_back(item.id, static_cast<int>(idx));
  }

  std::sort(id_index_.begin(), id_index_.end());
  for (std::size_t i = 1; i < id_index_.size(); ++i)
    if (id_index_[i].first == id_index_[i - 1].first)
      throw validation_error("blueprint: duplicate item id '" + id_index_[i].first + "'");

  for (int p = 0; p < n_dims; ++p) {
    if (!dim_covered[static_cast<std::size_t>(p)])
      throw validation_error("blueprint: dimension " + std::to_string(p + 1) +
                             " uninformed (no item loads on it)");
  }

  n_threshold_groups_ = *tg_seen.rbegin();
  if (static_cast<int>(tg_seen.size()) != n_threshold_groups_)
    throw validation_error("blueprint: threshold_group indices must cover 1..T without gaps");

  // Threshold sharing across cases is reserved for universal items.
  std::map<int, std::set<int>> tg_cases;
  std::map<int, bool> tg_all_universal;
  for (const ItemSpec& item : items) {
    tg_cases[item.threshold_group].insert(item.case_index);
    auto [it, inserted] = tg_all_universal.try_emplace(item.threshold_group, item.universal);
    if (!inserted) it->second = it->second && item.universal;
  }
  for (const auto& [tg, case_set] : tg_cases) {
    if (case_set.size() > 1 && !tg_all_universal[tg])
      throw validation_error(
          "blueprint: threshold_group " + std::to_string(tg) +
          " is shared across cases by non-universal items");
  }
  if (warnings != nullptr) {
    for (const ItemSpec& item : items) {
      if (item.universal && tg_cases[item.threshold_group].size() < 2) {
        warnings->push_back("item '" + item.id +
                            "': flagged universal but its threshold_group appears in one case");
      }
    }
  }
}

namespace {

json blueprint_to_json(const Blueprint& bp) {
  json j;
  j["dims"] = bp.n_dims;
  j["categories"] = bp.n_categories;
  j["cases"] = json::array();
  for (const CaseInfo& c : bp.cases) j["cases"].push_back({{"id", c.id}, {"label", c.label}});
  j["theta_groups"] = json::array();
  for (const ThetaGroupInfo& g : bp.theta_groups)
    j["theta_groups"].push_back({{"id", g.id}, {"label", g.label}});
  j["items"] = json::array();
  for (const ItemSpec& item : bp.items) {
    json ji;
    ji["id"] = item.id;
    ji["case"] = item.case_index;
    ji["theta_group"] = item.theta_group;
    ji["threshold_group"] = item.threshold_group;
    ji["loading"] = std::vector<double>(item.loading.data(), item.loading.data() + item.loading.size());
    ji["universal"] = item.universal;
    j["items"].push_back(std::move(ji));
  }
  return j;
}

}  // namespace

Blueprint load_blueprint(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw validation_error("blueprint parse failure in " + path.string() + ": " + e.what());
  }

  Blueprint bp;
  try {
    bp.n_dims = j.at("dims").get<int>();
    bp.n_categories = j.at("categories").get<int>();
    for (const json& jc : j.at("cases"))
      bp.cases.push_back({jc.at("id").get<std::string>(), jc.value("label", jc.at("id").get<std::string>())});
    for (const json& jg : j.at("theta_groups"))
      bp.theta_groups.push_back({jg.at("id").get<std::string>(), jg.value("label", jg.at("id").get<std::string>())});
    for (const json& ji : j.at("items")) {
      ItemSpec item;
      item.id = ji.at("id").get<std::string>();
      item.case_index = ji.at("case").get<int>();
      item.theta_group = ji.at("theta_group").get<int>();
      item.threshold_group = ji.at("threshold_group").get<int>();
      std::vector<double> loading = ji.at("loading").get<std::vector<double>>();
      item.loading = Eigen::Map<Eigen::VectorXd>(loading.data(), static_cast<Eigen::Index>(loading.size()));
      item.universal = ji.value("universal", false);
      bp.items.push_back(std::move(item));
    }
  } catch (const json::exception& e) {
    throw validation_error("blueprint schema error in " + path.string() + ": " + e.what());
  }

  bp.validate(warnings);
  return bp;
}

void save_blueprint(const Blueprint& bp, const std::filesystem::path& path) {
  write_text_file(path, blueprint_to_json(bp).dump(2) + "\n");
}

RatingsDataset RatingsDataset::from_records(const Blueprint& bp, std::vector<RatingRecord> records,
                                            bool validate, std::vector<std::string>* warnings) {
  RatingsDataset ds;
  ds.records = std::move(records);
  ds.reindex(bp, validate, warnings);
  return ds;
}

void RatingsDataset::reindex(const Blueprint& bp, bool validate,
                             std::vector<std::string>* warnings) {
  n_items = bp.n_items();
  n_learners = 0;
  n_raters = 0;
  for (const RatingRecord& r : records) {
    if (validate) {
      if (r.learner < 1) throw validation_error("ratings: learner index must be >= 1");
      if (r.rater < 1) throw validation_error("ratings: rater index must be >= 1");
      if (r.item < 0 || r.item >= n_items)
        throw validation_error("ratings: item index out of blueprint bounds");
      if (r.applicable) {
        if (!r.rating.has_value())
          throw validation_error("ratings: applicable record without a rating (learner " +
                                 std::to_string(r.learner) + ", item '" + bp.items[static_cast<std::size_t>(r.item)].id + "')");
        if (*r.rating < 1 || *r.rating > bp.n_categories)
          throw validation_error("ratings: rating outside 1.." + std::to_string(bp.n_categories));
      } else if (r.rating.has_value()) {
        throw validation_error("ratings: rating present on a non-applicable record (learner " +
                               std::to_string(r.learner) + ", item '" + bp.items[static_cast<std::size_t>(r.item)].id + "')");
      }
    }
    n_learners = std::max(n_learners, r.learner);
    n_raters = std::max(n_raters, r.rater);
  }

  // Group records by (learner, item); detect duplicate triples.
  std::map<std::pair<int, int>, TranscriptCell> grouped;
  std::map<std::pair<int, int>, std::set<int>> seen_raters;
  int mixed_gate_cells = 0;
  n_applicable_ = 0;
  for (const RatingRecord& r : records) {
    auto key = std::make_pair(r.learner, r.item);
    if (validate && !seen_raters[key].insert(r.rater).second) {
      throw validation_error("ratings: duplicate (learner, rater, item) triple (learner " +
                             std::to_string(r.learner) + ", rater " + std::to_string(r.rater) +
                             ", item '" + bp.items[static_cast<std::size_t>(r.item)].id + "')");
    }
    TranscriptCell& cell = grouped[key];
    cell.learner = r.learner;
    cell.item = r.item;
    if (r.applicable) {
      cell.scored.emplace_back(r.rater, *r.rating);
      ++n_applicable_;
    } else {
      ++cell.n_gated;
    }
  }

  cells_.clear();
  cells_.reserve(grouped.size());
  gate_n1_ = Eigen::MatrixXi::Zero(bp.n_cases(), bp.n_groups());
  gate_n0_ = Eigen::MatrixXi::Zero(bp.n_cases(), bp.n_groups());
  for (auto& [key, cell] : grouped) {
    const ItemSpec& item = bp.items[static_cast<std::size_t>(cell.item)];
    if (!cell.scored.empty() && cell.n_gated > 0) ++mixed_gate_cells;
    gate_n1_(item.case_index - 1, item.theta_group - 1) += static_cast<int>(cell.scored.size());
    gate_n0_(item.case_index - 1, item.theta_group - 1) += cell.n_gated;
    std::sort(cell.scored.begin(), cell.scored.end());
    cells_.push_back(std::move(cell));
  }

  if (mixed_gate_cells > 0 && warnings != nullptr) {
    warnings->push_back("ratings: applicability varies across raters for " +
                        std::to_string(mixed_gate_cells) +
                        " (learner, item) cells; the gate is usually transcript-level");
  }
}

RatingsDataset load_ratings(const std::filesystem::path& path, const Blueprint& bp,
                            std::vector<std::string>* warnings) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw validation_error("ratings: empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "learner_id,rater_id,item_id,applicable,rating")
    throw validation_error("ratings: unexpected header '" + line + "' in " + path.string());

  std::vector<RatingRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string, 5> fields;
    std::size_t field = 0, start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (field >= fields.size())
          throw validation_error("ratings: too many fields at line " + std::to_string(line_no));
        fields[field++] = line.substr(start, i - start);
        start = i + 1;
      }
    }
    if (field != fields.size())
      throw validation_error("ratings: expected 5 fields at line " + std::to_string(line_no));

    RatingRecord rec;
    try {
      rec.learner = std::stoi(fields[0]);
      rec.rater = std::stoi(fields[1]);
    } catch (const std::exception&) {
      throw validation_error("ratings: bad learner/rater id at line " + std::to_string(line_no));
    }
    rec.item = bp.item_index(fields[2]);
    if (rec.item < 0)
      throw validation_error("ratings: unknown item id '" + fields[2] + "' at line " +
                             std::to_string(line_no));
    if (fields[3] == "0")
      rec.applicable = false;
    else if (fields[3] == "1")
      rec.applicable = true;
    else
      throw validation_error("ratings: applicable must be 0 or 1 at line " + std::to_string(line_no));
    if (!fields[4].empty()) {
      try {
        rec.rating = std::stoi(fields[4]);
      } catch (const std::exception&) {
        throw validation_error("ratings: bad rating at line " + std::to_string(line_no));
      }
    }
    records.push_back(rec);
  }

  return RatingsDataset::from_records(bp, std::move(records), true, warnings);
}

void save_ratings(const RatingsDataset& ds, const Blueprint& bp,
                  const std::filesystem::path& path) {
  std::ostringstream out;
  out << "learner_id,rater_id,item_id,applicable,rating\n";
  for (const RatingRecord& r : ds.records) {
    out << r.learner << ',' << r.rater << ',' << bp.items[static_cast<std::size_t>(r.item)].id
        << ',' << (r.applicable ? 1 : 0) << ',';
    if (r.rating.has_value()) out << *r.rating;
    out << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace hrmsdt
