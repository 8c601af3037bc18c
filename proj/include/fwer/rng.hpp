#ifndef FWER_RNG_HPP
#define FWER_RNG_HPP

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace fwer {

// Purpose tags used as the last element of a stream path. Keeping them in one
// place guarantees distinct streams for distinct consumers.
namespace stream_tag {
inline constexpr std::uint64_t kStudy = 0x5354;
inline constexpr std::uint64_t kPrevalence = 0x5052;
inline constexpr std::uint64_t kNullEffect = 0x4e45;
inline constexpr std::uint64_t kAltEffect = 0x4145;
inline constexpr std::uint64_t kRun = 0x5255;
inline constexpr std::uint64_t kLayout = 0x4c41;
inline constexpr std::uint64_t kData = 0x4441;
inline constexpr std::uint64_t kBootstrap = 0x424f;
inline constexpr std::uint64_t kQmc = 0x514d;
inline constexpr std::uint64_t kExample1 = 0x4531;
}  // namespace stream_tag

// Counter-based random stream (Philox4x32-10). A stream is identified by a
// master seed and a path of integers; the key and the upper counter words are
// derived from a hash of both, so any (seed, path) yields the same sequence no
// matter which thread or in which order it is created.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0, std::initializer_list<std::uint64_t> path = {});

  // Stream for path + {index}. Does not touch the parent's position.
  RngStream child(std::uint64_t index) const;
  RngStream child(std::initializer_list<std::uint64_t> indices) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t path_hash() const noexcept { return path_hash_; }

  result_type operator()();
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on the open interval (0, 1).
  double uniform_open();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  // Gamma(shape, scale); shape > 0.
  double gamma(double shape, double scale);
  // Chi-square with real-valued degrees of freedom > 0.
  double chi_square(double df) { return gamma(0.5 * df, 2.0); }
  int binomial(int trials, double p);

 private:
  RngStream(std::uint64_t seed, std::uint64_t path_hash, int);
  void refill();

  std::uint64_t seed_;
  std::uint64_t path_hash_;
  std::array<std::uint32_t, 2> key_{};
  std::uint64_t counter_hi_ = 0;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
};

// Fills counts with a Multinomial(trials, probs) draw via conditional
// binomials. probs must be nonnegative and sum to one within 1e-12.
void multinomial_sample(RngStream& rng, int trials, std::span<const double> probs,
                        std::span<int> counts);
std::vector<int> multinomial_sample(RngStream& rng, int trials, std::span<const double> probs);

}  // namespace fwer

#endif  // FWER_RNG_HPP
