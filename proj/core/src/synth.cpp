#include "intentr/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "intentr/error.hpp"

namespace intentr {
namespace {

constexpr ItemId kItemBase = 214500000;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform_open() {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return u;
  }

  std::size_t below(std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::size_t geometric_length(Rng& rng, double mean) {
  if (mean <= 1.0) return 1;
  const double p = 1.0 / mean;
  return 1 + static_cast<std::size_t>(std::floor(std::log(rng.uniform_open()) / std::log1p(-p)));
}

void require(bool ok, const char* message) {
  if (!ok) throw std::invalid_argument(message);
}

}  // namespace

void SynthConfig::validate() const {
  require(n_sessions > 0, "n_sessions must be positive");
  require(n_items > 0, "n_items must be positive");
  require(n_categories > 0 && n_categories <= n_items, "n_categories must be in [1, n_items]");
  require(buyer_fraction >= 0.0 && buyer_fraction <= 1.0, "buyer_fraction must be in [0,1]");
  require(hot_item_fraction > 0.0 && hot_item_fraction <= 1.0,
          "hot_item_fraction must be in (0,1]");
  require(signal_strength >= 0.0 && signal_strength <= 1.0, "signal_strength must be in [0,1]");
  require(priced_buy_fraction >= 0.0 && priced_buy_fraction <= 1.0,
          "priced_buy_fraction must be in [0,1]");
  require(mean_length >= 1.0, "mean_length must be at least 1");
  require(dwell_log_sigma >= 0.0, "dwell_log_sigma must be non-negative");
  require(buyer_dwell_factor >= 1.0, "buyer_dwell_factor must be at least 1");
  require(span_days > 0, "span_days must be positive");
}

std::string format_iso8601(EpochSeconds seconds, int millis) {
  using namespace std::chrono;
  const auto days = static_cast<int>(seconds >= 0 ? seconds / 86400 : (seconds - 86399) / 86400);
  const EpochSeconds rem = seconds - static_cast<EpochSeconds>(days) * 86400;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                static_cast<int>(rem % 60), millis);
  return buf;
}

SynthOutput generate(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);

  const std::size_t n_hot = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.hot_item_fraction *
                                               static_cast<double>(config.n_items))));
  const std::size_t per_category =
      (config.n_items + config.n_categories - 1) / config.n_categories;
  auto category_of = [&](std::size_t item) { return std::to_string(item / per_category + 1); };

  std::vector<std::int64_t> base_price(config.n_items);
  for (auto& p : base_price) p = static_cast<std::int64_t>(std::exp(4.0 + 6.0 * rng.uniform()));

  const double dwell_scale = 1.0 + (config.buyer_dwell_factor - 1.0) * config.signal_strength;
  const EpochSeconds span = static_cast<EpochSeconds>(config.span_days) * 86400;

  std::ostringstream clicks;
  std::ostringstream buys;
  std::ostringstream labels;
  labels << "session_id,label\n";
  SynthOutput out;
  std::size_t n_buyers = 0;
  std::size_t n_clicks = 0;
  std::size_t n_buys = 0;
  std::vector<std::size_t> lengths;
  lengths.reserve(config.n_sessions);

  for (std::size_t s = 0; s < config.n_sessions; ++s) {
    const auto id = static_cast<SessionId>(s + 1);
    const bool buyer = rng.bernoulli(config.buyer_fraction);
    const std::size_t length = geometric_length(rng, config.mean_length);
    lengths.push_back(length);
    EpochSeconds t = config.start_time + static_cast<EpochSeconds>(rng.below(
                                             static_cast<std::size_t>(span)));
    std::vector<std::size_t> clicked;
    for (std::size_t e = 0; e < length; ++e) {
      std::size_t item = 0;
      if (buyer && rng.bernoulli(config.signal_strength)) {
        item = rng.below(n_hot);
      } else {
        item = rng.below(config.n_items);
      }
      clicked.push_back(item);
      const int millis = static_cast<int>(rng.below(1000));
      clicks << id << ',' << format_iso8601(t, millis) << ',' << kItemBase + static_cast<ItemId>(item)
             << ',' << category_of(item) << '\n';
      double dwell = std::exp(config.dwell_log_mu + config.dwell_log_sigma * rng.normal());
      if (buyer) dwell *= dwell_scale;
      t += std::max<EpochSeconds>(1, static_cast<EpochSeconds>(std::llround(dwell)));
    }
    n_clicks += length;
    if (buyer) {
      ++n_buyers;
      const std::size_t count = 1 + rng.below(2);
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t item = clicked[rng.below(clicked.size())];
        std::int64_t price = 0;
        std::int64_t quantity = 0;
        if (rng.bernoulli(config.priced_buy_fraction)) {
          price = base_price[item];
          quantity = 1 + static_cast<std::int64_t>(rng.below(3));
        }
        buys << id << ',' << format_iso8601(t + static_cast<EpochSeconds>(b), 0) << ','
             << kItemBase + static_cast<ItemId>(item) << ',' << price << ',' << quantity << '\n';
        ++n_buys;
      }
    }
    labels << id << ',' << (buyer ? 1 : 0) << '\n';
    out.labels.emplace_back(id, buyer ? 1 : 0);
  }

  std::nth_element(lengths.begin(), lengths.begin() + static_cast<std::ptrdiff_t>(lengths.size() / 2),
                   lengths.end());
  const std::size_t median_length = lengths[lengths.size() / 2];

  nlohmann::ordered_json meta;
  meta["generator"] = "intentr-synth";
  meta["seed"] = config.seed;
  meta["n_sessions"] = config.n_sessions;
  meta["buyer_fraction"] = config.buyer_fraction;
  meta["n_items"] = config.n_items;
  meta["n_categories"] = config.n_categories;
  meta["hot_items"] = n_hot;
  meta["hot_item_ids"] = {kItemBase, kItemBase + static_cast<ItemId>(n_hot) - 1};
  meta["session_length"] = {{"distribution", "geometric"}, {"support_min", 1},
                            {"mean", config.mean_length}};
  meta["dwell_seconds"] = {{"distribution", "lognormal"},
                           {"log_mu", config.dwell_log_mu},
                           {"log_sigma", config.dwell_log_sigma},
                           {"buyer_factor", dwell_scale}};
  meta["signal_strength"] = config.signal_strength;
  meta["priced_buy_fraction"] = config.priced_buy_fraction;
  meta["start_time"] = config.start_time;
  meta["span_days"] = config.span_days;
  meta["realized"] = {{"buyers", n_buyers},
                      {"buyer_fraction",
                       static_cast<double>(n_buyers) / static_cast<double>(config.n_sessions)},
                      {"clicks", n_clicks},
                      {"buys", n_buys},
                      {"median_length", median_length}};

  out.clicks_csv = clicks.str();
  out.buys_csv = buys.str();
  out.labels_csv = labels.str();
  out.metadata_json = meta.dump(2) + "\n";
  return out;
}

void write_synth(const SynthOutput& output, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    const auto path = std::filesystem::path(dir) / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
  };
  put("clicks.csv", output.clicks_csv);
  put("buys.csv", output.buys_csv);
  put("labels.csv", output.labels_csv);
  put("metadata.json", output.metadata_json);
}

}  // namespace intentr
