#include "fwer/rng.hpp"

#include <boost/random/binomial_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <stdexcept>

namespace fwer {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t extend_path(std::uint64_t path_hash, std::uint64_t index) {
  return splitmix64(path_hash ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
    : RngStream(seed, 0x5EEDull, 0) {
  for (auto p : path) path_hash_ = extend_path(path_hash_, p);
  *this = RngStream(seed_, path_hash_, 0);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t path_hash, int)
    : seed_(seed), path_hash_(path_hash) {
  const std::uint64_t k = splitmix64(seed ^ splitmix64(path_hash));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  counter_hi_ = splitmix64(path_hash + 0xD1B54A32D192ED03ull);
}

RngStream RngStream::child(std::uint64_t index) const {
  return RngStream(seed_, extend_path(path_hash_, index), 0);
}

RngStream RngStream::child(std::initializer_list<std::uint64_t> indices) const {
  std::uint64_t h = path_hash_;
  for (auto i : indices) h = extend_path(h, i);
  return RngStream(seed_, h, 0);
}

void RngStream::refill() {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
      static_cast<std::uint32_t>(counter_hi_), static_cast<std::uint32_t>(counter_hi_ >> 32)};
  const auto out = philox4x32_10(ctr, key_);
  buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
  buffered_ = 2;
  ++block_;
}

RngStream::result_type RngStream::operator()() {
  if (buffered_ == 0) refill();
  return buffer_[--buffered_];
}

double RngStream::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open() {
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  boost::random::normal_distribution<double> dist;
  return dist(*this);
}

double RngStream::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw std::invalid_argument("gamma: shape and scale must be positive");
  boost::random::gamma_distribution<double> dist(shape, scale);
  return dist(*this);
}

int RngStream::binomial(int trials, double p) {
  if (trials < 0) throw std::invalid_argument("binomial: negative trial count");
  if (!(p >= 0.0)) throw std::invalid_argument("binomial: negative probability");
  if (trials == 0 || p == 0.0) return 0;
  if (p >= 1.0) return trials;
  boost::random::binomial_distribution<int, double> dist(trials, p);
  return dist(*this);
}

void multinomial_sample(RngStream& rng, int trials, std::span<const double> probs,
                        std::span<int> counts) {
  if (trials < 0) throw std::invalid_argument("multinomial: negative trial count");
  if (counts.size() != probs.size())
    throw std::invalid_argument("multinomial: counts and probs differ in length");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("multinomial: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("multinomial: probabilities do not sum to one");

  int remaining = trials;
  double mass = 1.0;
  const std::size_t k = probs.size();
  for (std::size_t i = 0; i < k; ++i) {
    if (i + 1 == k) {
      counts[i] = remaining;
      break;
    }
    if (remaining == 0) {
      counts[i] = 0;
      continue;
    }
    const double q = mass > 0.0 ? std::min(1.0, probs[i] / mass) : 0.0;
    counts[i] = rng.binomial(remaining, q);
    remaining -= counts[i];
    mass -= probs[i];
  }
}

std::vector<int> multinomial_sample(RngStream& rng, int trials, std::span<const double> probs) {
  std::vector<int> counts(probs.size(), 0);
  multinomial_sample(rng, trials, probs, counts);
  return counts;
}

}  // namespace fwer
