#pragma once

#include <gtest/gtest.h>

#include "glab/error.hpp"

namespace glab::testing {

template <typename Fn>
::testing::AssertionResult throws_kind(Fn&& fn, ErrorKind kind) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() == kind) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure() << "threw " << to_string(e.kind()) << " (" << e.what() << "), expected "
                                         << to_string(kind);
  } catch (const std::exception& e) {
    return ::testing::AssertionFailure() << "threw foreign exception: " << e.what();
  }
  return ::testing::AssertionFailure() << "did not throw";
}

}  // namespace glab::testing

#define EXPECT_GLAB_ERROR(stmt, kind) EXPECT_TRUE(::glab::testing::throws_kind([&] { stmt; }, ::glab::ErrorKind::kind))
