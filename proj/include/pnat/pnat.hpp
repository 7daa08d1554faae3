#pragma once

// Umbrella header.

#include "pnat/core/grad_check.hpp"
#include "pnat/core/optim.hpp"
#include "pnat/decoding/decode.hpp"
#include "pnat/harness/bleu.hpp"
#include "pnat/harness/config.hpp"
#include "pnat/harness/corpus.hpp"
#include "pnat/harness/model_io.hpp"
#include "pnat/harness/report.hpp"
#include "pnat/harness/tasks.hpp"
#include "pnat/harness/vocab.hpp"
#include "pnat/position/metrics.hpp"
#include "pnat/position/search.hpp"
#include "pnat/training/trainer.hpp"
