#pragma once

#include "psi/analytics/f_distribution.hpp"
#include "psi/analytics/granger.hpp"
#include "psi/analytics/metrics.hpp"
#include "psi/analytics/series.hpp"
#include "psi/common.hpp"
#include "psi/corpus.hpp"
#include "psi/ensemble.hpp"
#include "psi/http_client.hpp"
#include "psi/io.hpp"
#include "psi/llm_gateway.hpp"
#include "psi/naive_bayes.hpp"
#include "psi/pipeline.hpp"
#include "psi/prompts.hpp"
#include "psi/psi_index.hpp"
