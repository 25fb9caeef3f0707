#include "intentr/vocab.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "intentr/error.hpp"

namespace intentr {
namespace {

constexpr std::string_view kVocabMagic = "intentr-vocab v1";

std::string int_token(std::int64_t v) { return std::to_string(v); }

std::string optional_token(const std::optional<std::int64_t>& v) {
  return v ? int_token(*v) : std::string(Vocabulary::kAbsentToken);
}

}  // namespace

std::string_view field_name(Field field) {
  switch (field) {
    case Field::kItem: return "item";
    case Field::kCategory: return "category";
    case Field::kTimeBin: return "timestamp";
    case Field::kPrice: return "price";
    case Field::kQuantity: return "quantity";
    case Field::kPriceVariance: return "price_variance";
  }
  return "?";
}

std::int64_t quantize_timestamp(EpochSeconds timestamp) {
  // floor division; negative timestamps are not expected but stay monotone
  std::int64_t bin = timestamp / kTimeBinSeconds;
  if (timestamp < 0 && timestamp % kTimeBinSeconds != 0) --bin;
  return bin;
}

std::int32_t Vocabulary::add(std::string_view token) {
  std::string key(token);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  const auto index = static_cast<std::int32_t>(tokens_.size() + 1);
  tokens_.push_back(key);
  index_.emplace(std::move(key), index);
  return index;
}

std::int32_t Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

const std::string& Vocabulary::token(std::int32_t index) const {
  if (index < 1 || static_cast<std::size_t>(index) > tokens_.size()) {
    throw std::out_of_range("vocabulary index " + std::to_string(index));
  }
  return tokens_[static_cast<std::size_t>(index - 1)];
}

std::uint64_t Vocabulary::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  mix(field_name_);
  for (const auto& t : tokens_) mix(t);
  return h;
}

void Vocabulary::write(std::ostream& out) const {
  out << kVocabMagic << '\n' << field_name_ << '\n' << tokens_.size() << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << (i + 1) << '\n';
}

Vocabulary Vocabulary::read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kVocabMagic) throw IoError("not a vocabulary file");
  std::string name;
  if (!std::getline(in, name)) throw IoError("vocabulary: missing field name");
  if (!std::getline(in, line)) throw IoError("vocabulary: missing count");
  const std::size_t count = std::stoull(line);
  Vocabulary vocab(name);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw IoError("vocabulary: truncated");
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw IoError("vocabulary: bad line " + line);
    const auto expected = static_cast<std::int32_t>(std::stol(line.substr(tab + 1)));
    if (vocab.add(line.substr(0, tab)) != expected) {
      throw IoError("vocabulary: index out of order at " + line);
    }
  }
  return vocab;
}

Vocabulary build_vocab(std::string field_name, std::span<const std::string> values) {
  Vocabulary vocab(std::move(field_name));
  for (const auto& v : values) vocab.add(v);
  return vocab;
}

std::unordered_map<ItemId, int> item_price_variance(std::span<const Session> sessions) {
  std::map<ItemId, std::vector<double>> prices;
  for (const auto& s : sessions) {
    for (const auto& buy : s.purchases) {
      if (buy.price) prices[buy.item_id].push_back(static_cast<double>(*buy.price));
    }
  }

  std::unordered_map<ItemId, int> buckets;
  std::vector<std::pair<double, ItemId>> ranked;
  for (const auto& [item, observed] : prices) {
    buckets[item] = 0;
    if (observed.size() < 2) continue;
    double mean = 0.0;
    for (double p : observed) mean += p;
    mean /= static_cast<double>(observed.size());
    double var = 0.0;
    for (double p : observed) var += (p - mean) * (p - mean);
    var /= static_cast<double>(observed.size());
    ranked.emplace_back(var, item);
  }
  std::sort(ranked.begin(), ranked.end());
  const std::size_t n = ranked.size();
  std::size_t rank = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && ranked[i].first != ranked[i - 1].first) rank = i;
    buckets[ranked[i].second] = static_cast<int>(rank * 10 / n);
  }
  return buckets;
}

std::unordered_map<ItemId, ItemPriceInfo> build_price_catalog(std::span<const Session> sessions) {
  std::map<ItemId, std::vector<std::int64_t>> prices;
  std::map<ItemId, std::map<std::int64_t, std::size_t>> quantities;
  for (const auto& s : sessions) {
    for (const auto& buy : s.purchases) {
      if (buy.price) prices[buy.item_id].push_back(*buy.price);
      if (buy.quantity) ++quantities[buy.item_id][*buy.quantity];
    }
  }
  std::unordered_map<ItemId, ItemPriceInfo> catalog;
  for (auto& [item, observed] : prices) {
    std::sort(observed.begin(), observed.end());
    catalog[item].price = observed[(observed.size() - 1) / 2];
  }
  for (const auto& [item, counts] : quantities) {
    // ties resolve to the smaller quantity
    auto best = std::max_element(counts.begin(), counts.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    catalog[item].quantity = best->first;
  }
  for (const auto& [item, bucket] : item_price_variance(sessions)) {
    catalog[item].variance_bucket = bucket;
  }
  return catalog;
}

std::vector<Field> FieldConfig::active_fields() const {
  std::vector<Field> fields{Field::kItem, Field::kCategory, Field::kTimeBin, Field::kPrice,
                            Field::kQuantity};
  if (use_price_variance) fields.push_back(Field::kPriceVariance);
  return fields;
}

int FieldConfig::embedding_width() const {
  int total = 0;
  for (Field f : active_fields()) total += width(f);
  return total;
}

FeatureSpace FeatureSpace::build(std::span<const Session> train, const FieldConfig& config) {
  FeatureSpace space;
  space.config_ = config;
  space.catalog_ = build_price_catalog(train);
  for (std::size_t f = 0; f < kNumFields; ++f) {
    space.vocabs_[f] = Vocabulary(std::string(field_name(static_cast<Field>(f))));
  }
  space.vocabs_[static_cast<std::size_t>(Field::kPrice)].add(Vocabulary::kAbsentToken);
  space.vocabs_[static_cast<std::size_t>(Field::kQuantity)].add(Vocabulary::kAbsentToken);

  for (const auto& session : train) {
    for (const auto& e : session.events) {
      const ItemPriceInfo* info = space.price_info(e.item_id);
      space.vocabs_[0].add(int_token(e.item_id));
      space.vocabs_[1].add(e.category_id);
      space.vocabs_[2].add(int_token(quantize_timestamp(e.timestamp)));
      space.vocabs_[3].add(optional_token(info ? info->price : std::nullopt));
      space.vocabs_[4].add(optional_token(info ? info->quantity : std::nullopt));
      space.vocabs_[5].add(int_token(info ? info->variance_bucket : 0));
    }
  }
  return space;
}

const ItemPriceInfo* FeatureSpace::price_info(ItemId item) const {
  auto it = catalog_.find(item);
  return it == catalog_.end() ? nullptr : &it->second;
}

std::optional<std::int64_t> FeatureSpace::item_price(ItemId item) const {
  const ItemPriceInfo* info = price_info(item);
  return info ? info->price : std::nullopt;
}

IndexedEvent FeatureSpace::index_event(const ClickEvent& e) const {
  const ItemPriceInfo* info = price_info(e.item_id);
  IndexedEvent out;
  out[Field::kItem] = vocabs_[0].lookup(int_token(e.item_id));
  out[Field::kCategory] = vocabs_[1].lookup(e.category_id);
  out[Field::kTimeBin] = vocabs_[2].lookup(int_token(quantize_timestamp(e.timestamp)));
  out[Field::kPrice] = vocabs_[3].lookup(optional_token(info ? info->price : std::nullopt));
  out[Field::kQuantity] = vocabs_[4].lookup(optional_token(info ? info->quantity : std::nullopt));
  out[Field::kPriceVariance] = vocabs_[5].lookup(int_token(info ? info->variance_bucket : 0));
  return out;
}

void FeatureSpace::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t f = 0; f < kNumFields; ++f) {
    std::ofstream out(fs::path(dir) / (std::string(field_name(static_cast<Field>(f))) + ".vocab"));
    if (!out) throw IoError("cannot write vocabulary in " + dir);
    vocabs_[f].write(out);
  }
  std::ofstream out(fs::path(dir) / "catalog.tsv");
  if (!out) throw IoError("cannot write catalog in " + dir);
  std::vector<ItemId> items;
  items.reserve(catalog_.size());
  for (const auto& [item, info] : catalog_) items.push_back(item);
  std::sort(items.begin(), items.end());
  for (ItemId item : items) {
    const auto& info = catalog_.at(item);
    out << item << '\t' << optional_token(info.price) << '\t' << optional_token(info.quantity)
        << '\t' << info.variance_bucket << '\n';
  }
}

FeatureSpace FeatureSpace::load(const std::string& dir, const FieldConfig& config) {
  namespace fs = std::filesystem;
  FeatureSpace space;
  space.config_ = config;
  for (std::size_t f = 0; f < kNumFields; ++f) {
    const auto path = fs::path(dir) / (std::string(field_name(static_cast<Field>(f))) + ".vocab");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    space.vocabs_[f] = Vocabulary::read(in);
  }
  const auto path = fs::path(dir) / "catalog.tsv";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  auto parse_optional = [](const std::string& s) -> std::optional<std::int64_t> {
    if (s == Vocabulary::kAbsentToken) return std::nullopt;
    return std::stoll(s);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string item, price, quantity, bucket;
    if (!std::getline(row, item, '\t') || !std::getline(row, price, '\t') ||
        !std::getline(row, quantity, '\t') || !std::getline(row, bucket)) {
      throw IoError("catalog.tsv: bad line " + line);
    }
    space.catalog_[std::stoll(item)] = {parse_optional(price), parse_optional(quantity),
                                        std::stoi(bucket)};
  }
  return space;
}

EmbeddingTable make_embedding(Field field, std::size_t rows, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-kEmbeddingInitRange, kEmbeddingInitRange);
  EmbeddingTable table;
  table.field = field;
  table.weights.resize(static_cast<Eigen::Index>(rows), width);
  for (Eigen::Index i = 0; i < table.weights.size(); ++i) table.weights.data()[i] = dist(rng);
  return table;
}

Vector embed_event(const FeatureSpace& space, std::span<const EmbeddingTable> tables,
                   const ClickEvent& event) {
  const IndexedEvent indexed = space.index_event(event);
  Vector out(space.config().embedding_width());
  Eigen::Index offset = 0;
  for (const auto& table : tables) {
    const auto w = table.weights.cols();
    out.segment(offset, w) = table.weights.row(indexed[table.field]).transpose();
    offset += w;
  }
  if (offset != out.size()) throw ShapeError("embedding tables do not match the field config");
  return out;
}

}  // namespace intentr
