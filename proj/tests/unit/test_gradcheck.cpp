#include "helpers.hpp"
#include "sasreid/gradcheck.hpp"
#include "sasreid/shape.hpp"

#include <doctest.h>

#include <set>

using namespace sasreid;
using namespace sasreid::gradcheck;

namespace {

// Same forward value, reversed gradient.
ag::Var flip_gradient(const ag::Var& x) {
  return ag::make_op(x.value(), {x}, [](ag::Node& self) { self.parents[0]->grad_buffer() -= self.grad; });
}

}  // namespace

TEST_CASE("relative error") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(0.0, 1e-9) == doctest::Approx(1e-9 / 1e-7));
}

TEST_CASE("every component passes on a fresh build") {
  const auto results = run(standard_cases(0));
  std::set<std::string> seen;
  for (const auto& r : results) {
    INFO(r.component << " max rel error " << r.max_rel_error);
    CHECK(r.passed);
    CHECK(r.entries > 0);
    CHECK(r.max_rel_error <= 1e-3);
    seen.insert(r.component);
  }
  const auto names = component_names();
  CHECK(seen == std::set<std::string>(names.begin(), names.end()));
}

TEST_CASE("a sign error in the shape prior fails only that component") {
  auto cases = standard_cases(1);
  for (auto& c : cases) {
    if (c.component != "shape_prior") continue;
    const auto alpha = c.inputs.front();
    c.loss = [alpha] { return flip_gradient(shape::shape_prior_loss(alpha, shape::canonical_prior())); };
  }
  for (const auto& r : run(cases)) {
    INFO(r.component);
    CHECK(r.passed == (r.component != "shape_prior"));
  }
}

TEST_CASE("component filter") {
  const auto results = run(standard_cases(2), "memory");
  REQUIRE(results.size() == 1);
  CHECK(results[0].component == "memory");
  CHECK(run(standard_cases(2), "nonexistent").empty());
}
