// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddp/config.hpp"
#include "ddp/corpus.hpp"
#include "ddp/cpo.hpp"
#include "ddp/dataprep.hpp"
#include "ddp/error.hpp"
#include "ddp/inference.hpp"
#include "ddp/metrics.hpp"
#include "ddp/policy.hpp"
#include "ddp/preference.hpp"
#include "ddp/protocol.hpp"
#include "ddp/relation.hpp"
#include "ddp/remote_scorer.hpp"
#include "ddp/scorer.hpp"
#include "ddp/util.hpp"
