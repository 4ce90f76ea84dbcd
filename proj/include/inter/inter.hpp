#pragma once

// Umbrella header.

#include "inter/config.hpp"
#include "inter/corpus.hpp"
#include "inter/dense_index.hpp"
#include "inter/error.hpp"
#include "inter/eval.hpp"
#include "inter/hash.hpp"
#include "inter/http_embedder.hpp"
#include "inter/llm_gateway.hpp"
#include "inter/openai_provider.hpp"
#include "inter/pipeline.hpp"
#include "inter/prompts.hpp"
#include "inter/ranking.hpp"
#include "inter/sparse_index.hpp"
#include "inter/version.hpp"
