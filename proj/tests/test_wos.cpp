#include <cmath>
#include <vector>

#include "cloak/wos.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cloak;
using testutil::kind_of;

namespace {

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("harmonic extension: constant data is exact") {
  const auto ball = DomainSpec::ball(Vec::Zero(3), 2.0);
  const auto f = HarmonicPolynomial::constant(3, 1.0);
  const auto e = wos_harmonic(ball, f, v3(0.5, 0.1, -0.3), 2000, 1);
  CHECK(e.mean == 1.0);
  CHECK(e.std_error == 0.0);
  CHECK(e.n_samples == 2000);
  CHECK(e.eps_shell == doctest::Approx(2e-4));
}

TEST_CASE("harmonic extension: first harmonic within three standard errors") {
  const auto ball = DomainSpec::ball(Vec::Zero(3), 2.0);
  const auto f = HarmonicPolynomial::first_harmonic(3, 2.0);
  const Vec x = v3(0.6, 0.2, 0.1);
  const auto e = wos_harmonic(ball, f, x, 20000, 7);
  CHECK(std::abs(e.mean - 0.3) <= 3 * e.std_error + 2e-4);
  CHECK(e.std_error > 0.0);

  const auto disk = DomainSpec::disk(1.0);
  const auto g = HarmonicPolynomial::first_harmonic(2, 1.0);
  const auto d = wos_harmonic(disk, g, v2(0.0, 0.0), 20000, 8);
  CHECK(std::abs(d.mean) <= 3 * d.std_error + 1e-4);
}

TEST_CASE("harmonic extension: quadratic harmonic data") {
  HarmonicPolynomial p = HarmonicPolynomial::constant(2, 0.5);
  p.H(0, 0) = 1.0;
  p.H(1, 1) = -1.0;
  const Vec x = v2(0.3, -0.4);
  const auto e = wos_harmonic(DomainSpec::disk(1.0), p, x, 20000, 9);
  CHECK(std::abs(e.mean - p(x)) <= 3 * e.std_error + 1e-4);
}

TEST_CASE("harmonic extension: reproducible and thread independent") {
  const auto ball = DomainSpec::ball(Vec::Zero(3), 2.0);
  const auto f = HarmonicPolynomial::first_harmonic(3, 2.0, 1);
  const Vec x = v3(0.2, 0.7, -0.1);
  const auto a = wos_harmonic(ball, f, x, 5000, 42, 0.0, 1);
  const auto b = wos_harmonic(ball, f, x, 5000, 42, 0.0, 4);
  CHECK(a.mean == b.mean);
  CHECK(a.std_error == b.std_error);
  const auto c = wos_harmonic(ball, f, x, 5000, 43);
  CHECK(c.mean != a.mean);
}

TEST_CASE("harmonic extension: maximum principle") {
  const auto ball = DomainSpec::ball(Vec::Zero(3), 2.0);
  HarmonicPolynomial p = HarmonicPolynomial::constant(3, 0.2);
  p.g = v3(0.5, -0.2, 0.1);
  p.H(0, 1) = p.H(1, 0) = 0.3;
  const double bound = p.max_abs_on_sphere(2.0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto e = wos_harmonic(ball, p, v3(0.1 * seed, 0.4, -0.5), 2000, seed);
    CHECK(std::abs(e.mean) <= bound);
  }
}

TEST_CASE("harmonic extension: argument checks") {
  const auto ball = DomainSpec::ball(Vec::Zero(3), 2.0);
  const auto f = HarmonicPolynomial::constant(3, 1.0);
  CHECK(kind_of([&] { wos_harmonic(ball, f, v3(3, 0, 0), 10, 1); }) == ErrorKind::OutsideDomain);
  CHECK(kind_of([&] { wos_harmonic(ball, f, v3(0, 0, 0), 0, 1); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { wos_harmonic(ball, f, v2(0, 0), 10, 1); }) == ErrorKind::InvalidArgument);
  const auto ann = DomainSpec::annulus(Vec::Zero(3), 1.0, 2.0);
  CHECK(kind_of([&] { wos_harmonic(ann, f, v3(1.5, 0, 0), 10, 1); }) ==
        ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { wos_harmonic(ball, f, v3(0.5, 0, 0), 10, 1, 1e-300, 1, 10); }) ==
        ErrorKind::NonConvergence);
}

TEST_CASE("harmonic polynomials from json") {
  const auto p = HarmonicPolynomial::from_json(
      {{"c", 1.0}, {"g", {0.0, 1.0}}, {"H", {{1.0, 0.0}, {0.0, -1.0}}}}, 2);
  CHECK(p(v2(2.0, 3.0)) == doctest::Approx(1.0 + 3.0 + 4.0 - 9.0));
  CHECK(kind_of([] { HarmonicPolynomial::from_json({{"H", {{1.0, 0.0}, {0.0, 1.0}}}}, 2); }) ==
        ErrorKind::ConfigInvalid);
  CHECK(kind_of([] { HarmonicPolynomial::from_json({{"H", {{0.0, 1.0}, {0.0, 0.0}}}}, 2); }) ==
        ErrorKind::ConfigInvalid);
  CHECK(kind_of([] { HarmonicPolynomial::from_json({{"g", {1.0}}}, 2); }) ==
        ErrorKind::ConfigInvalid);
}

TEST_CASE("concentric hitting closed forms") {
  CHECK(concentric_hitting(0.1, 2.0, 0.1) == doctest::Approx(1.0));
  CHECK(concentric_hitting(0.1, 2.0, 2.0) == doctest::Approx(0.0));
  CHECK(concentric_hitting(0.1, 2.0, 0.5) == doctest::Approx(oracle::hitting3(0.1, 2.0, 0.5)));
  CHECK(concentric_hitting(0.1, 2.0, 0.5, 2) == doctest::Approx(oracle::hitting2(0.1, 2.0, 0.5)));
  CHECK(kind_of([] { concentric_hitting(2.0, 1.0, 1.5); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([] { concentric_hitting(0.1, 1.0, 1.5); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("hitting probability: concentric target") {
  const HittingQuery q{v3(0.5, 0, 0), v3(0, 0, 0), 0.1, 2.0, 1e-3};
  const auto e = hitting_probability(q, 20000, 5);
  const double exact = oracle::hitting3(0.1, 2.0, 0.5);
  CHECK(std::abs(e.mean - exact) <= 3 * e.std_error + 0.01);

  const HittingQuery q2{v2(0.5, 0), v2(0, 0), 0.1, 2.0, 1e-3};
  const auto e2 = hitting_probability(q2, 20000, 6);
  CHECK(std::abs(e2.mean - oracle::hitting2(0.1, 2.0, 0.5)) <= 3 * e2.std_error + 0.01);
}

TEST_CASE("hitting probability: decreases with the target radius") {
  double prev = 1.0;
  for (double a : {0.4, 0.2, 0.1, 0.05}) {
    const HittingQuery q{v3(0.8, 0, 0), v3(0, 0, 0), a, 2.0, std::min(2e-4, 1e-2 * a)};
    const auto e = hitting_probability(q, 4000, 11);
    CHECK(e.mean < prev);
    prev = e.mean;
  }
}

TEST_CASE("hitting probability: validation") {
  CHECK(kind_of([] { validate({v3(1, 0, 0), v3(0, 0, 0), 0.0, 2.0, 0.0}); }) ==
        ErrorKind::InvalidArgument);
  CHECK(kind_of([] { validate({v3(1, 0, 0), v3(1.5, 0, 0), 0.6, 2.0, 0.0}); }) ==
        ErrorKind::InvalidArgument);
  CHECK(kind_of([] { validate({v3(0.05, 0, 0), v3(0, 0, 0), 0.1, 2.0, 0.0}); }) ==
        ErrorKind::OutsideDomain);
  CHECK(kind_of([] { validate({v3(3, 0, 0), v3(0, 0, 0), 0.1, 2.0, 0.0}); }) ==
        ErrorKind::OutsideDomain);
  CHECK(kind_of([] { validate({v3(1, 0, 0), v2(0, 0), 0.1, 2.0, 0.0}); }) ==
        ErrorKind::InvalidArgument);
}

TEST_CASE("uniqueness demo: shrinking shells tighten the bound") {
  const auto f = HarmonicPolynomial::first_harmonic(3, 2.0);
  const auto rep = uniqueness_demo(v3(0.8, 0.3, 0), v3(0, 0, 0), f, {0.4, 0.2, 0.1, 0.05}, 4000, 3);
  CHECK(rep.exact == doctest::Approx(0.4));
  REQUIRE(rep.shells.size() == 4);
  CHECK(rep.shells.front().radius == 0.4);
  CHECK(rep.tightening);
  for (const auto& s : rep.shells) CHECK(s.within_bound);
  CHECK(kind_of([&] { uniqueness_demo(v3(0, 0, 0), v3(0, 0, 0), f, {0.1}, 10, 1); }) ==
        ErrorKind::InvalidArgument);
}

TEST_CASE("walk estimates serialize their metadata") {
  const auto e = wos_harmonic(DomainSpec::disk(1.0), HarmonicPolynomial::constant(2, 2.0), v2(0, 0), 10, 77);
  const auto j = to_json(e);
  CHECK(j["mean"] == 2.0);
  CHECK(j["stderr"] == 0.0);
  CHECK(j["n"] == 10);
  CHECK(j["seed"] == 77);
  CHECK(j.contains("eps_shell"));
}
