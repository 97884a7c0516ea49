// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_WATERFLOW_HPP
#define WATERFLOW_WATERFLOW_HPP

#include "waterflow/checkpoint.hpp"
#include "waterflow/cli.hpp"
#include "waterflow/config.hpp"
#include "waterflow/dataset.hpp"
#include "waterflow/error.hpp"
#include "waterflow/flow.hpp"
#include "waterflow/graph.hpp"
#include "waterflow/imaging.hpp"
#include "waterflow/io.hpp"
#include "waterflow/layers.hpp"
#include "waterflow/metrics.hpp"
#include "waterflow/net.hpp"
#include "waterflow/ops.hpp"
#include "waterflow/optim.hpp"
#include "waterflow/parallel.hpp"
#include "waterflow/priors.hpp"
#include "waterflow/rng.hpp"
#include "waterflow/tensor.hpp"

#endif
