// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatloc/common.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace splatloc {
namespace {

std::atomic<std::size_t> g_max_threads{
    std::max<std::size_t>(1, std::thread::hardware_concurrency())};

}  // namespace

void set_max_threads(std::size_t n) { g_max_threads = std::max<std::size_t>(1, n); }

std::size_t max_threads() { return g_max_threads; }

}  // namespace splatloc
