#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "intentr/ingest.hpp"
#include "intentr/tensor.hpp"

namespace intentr {

enum class Field : std::uint8_t {
  kItem = 0,
  kCategory,
  kTimeBin,
  kPrice,
  kQuantity,
  kPriceVariance,
};
inline constexpr std::size_t kNumFields = 6;

std::string_view field_name(Field field);

inline constexpr EpochSeconds kTimeBinSeconds = 4 * 60 * 60;

/// floor(timestamp / 4h).
std::int64_t quantize_timestamp(EpochSeconds timestamp);

/// Token -> index map. Index 0 is reserved for values never seen at build
/// time; real tokens get 1..N in first-appearance order.
class Vocabulary {
 public:
  static constexpr std::int32_t kUnknown = 0;
  static constexpr std::string_view kAbsentToken = "<absent>";

  Vocabulary() = default;
  explicit Vocabulary(std::string field_name) : field_name_(std::move(field_name)) {}

  /// Returns the token's index, inserting it if new.
  std::int32_t add(std::string_view token);
  [[nodiscard]] std::int32_t lookup(std::string_view token) const;
  [[nodiscard]] bool contains(std::string_view token) const;

  /// Number of real tokens (excludes UNKNOWN).
  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  /// Embedding rows needed: size() + 1.
  [[nodiscard]] std::size_t rows() const { return tokens_.size() + 1; }
  [[nodiscard]] const std::string& token(std::int32_t index) const;
  [[nodiscard]] const std::string& field_name() const { return field_name_; }

  /// FNV-1a over the field name and tokens in index order.
  [[nodiscard]] std::uint64_t digest() const;

  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.field_name_ == b.field_name_ && a.tokens_ == b.tokens_;
  }

 private:
  std::string field_name_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

Vocabulary build_vocab(std::string field_name, std::span<const std::string> values);

/// Per-item price features derived from training purchases.
struct ItemPriceInfo {
  std::optional<std::int64_t> price;
  std::optional<std::int64_t> quantity;
  int variance_bucket = 0;
};

/// Population variance of each item's observed prices, as a decile bucket
/// 0..9 of its rank among items with at least two observations. Items with
/// fewer observations get bucket 0. Ties share the lowest rank.
std::unordered_map<ItemId, int> item_price_variance(std::span<const Session> sessions);

/// Median observed price (lower median) and most common quantity per item,
/// plus the variance bucket.
std::unordered_map<ItemId, ItemPriceInfo> build_price_catalog(std::span<const Session> sessions);

struct FieldConfig {
  std::array<int, kNumFields> widths{100, 10, 10, 10, 10, 10};
  bool use_price_variance = false;

  [[nodiscard]] std::vector<Field> active_fields() const;
  [[nodiscard]] int embedding_width() const;
  [[nodiscard]] int width(Field f) const { return widths[static_cast<std::size_t>(f)]; }
};

/// Sentinel stored at padded batch positions; never used as a row index.
inline constexpr std::int32_t kPadIndex = -1;

struct IndexedEvent {
  std::array<std::int32_t, kNumFields> index{};

  std::int32_t& operator[](Field f) { return index[static_cast<std::size_t>(f)]; }
  std::int32_t operator[](Field f) const { return index[static_cast<std::size_t>(f)]; }
  friend bool operator==(const IndexedEvent&, const IndexedEvent&) = default;
};

/// Vocabularies plus the item price catalog: everything needed to turn a
/// ClickEvent into embedding row indices. Built from training sessions only.
class FeatureSpace {
 public:
  FeatureSpace() = default;

  static FeatureSpace build(std::span<const Session> train, const FieldConfig& config);

  [[nodiscard]] IndexedEvent index_event(const ClickEvent& event) const;
  [[nodiscard]] const FieldConfig& config() const { return config_; }
  [[nodiscard]] const Vocabulary& vocab(Field f) const {
    return vocabs_[static_cast<std::size_t>(f)];
  }
  [[nodiscard]] std::optional<std::int64_t> item_price(ItemId item) const;
  [[nodiscard]] const ItemPriceInfo* price_info(ItemId item) const;

  /// Writes one vocabulary file per active field plus `catalog.tsv` into dir.
  void save(const std::string& dir) const;
  static FeatureSpace load(const std::string& dir, const FieldConfig& config);

 private:
  FieldConfig config_;
  std::array<Vocabulary, kNumFields> vocabs_;
  std::unordered_map<ItemId, ItemPriceInfo> catalog_;
};

/// One trainable lookup table: row i is the vector for vocabulary index i.
struct EmbeddingTable {
  Field field = Field::kItem;
  Tensor2 weights;
  bool trainable = true;

  [[nodiscard]] int width() const { return static_cast<int>(weights.cols()); }
};

inline constexpr double kEmbeddingInitRange = 0.075;

/// Uniform in [-0.075, 0.075].
EmbeddingTable make_embedding(Field field, std::size_t rows, int width, std::mt19937_64& rng);

/// Concatenates each active field's row in Field order.
Vector embed_event(const FeatureSpace& space, std::span<const EmbeddingTable> tables,
                   const ClickEvent& event);

}  // namespace intentr
