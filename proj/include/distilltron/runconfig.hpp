// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once
