// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>

PYBIND11_MODULE(_distilltron, m) { m.doc() = "distilltron core bindings"; }
