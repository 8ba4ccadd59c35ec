#pragma once

#include "emotl/autodiff.hpp"
#include "emotl/baselines.hpp"
#include "emotl/checkpoint.hpp"
#include "emotl/dataset.hpp"
#include "emotl/ensemble.hpp"
#include "emotl/errors.hpp"
#include "emotl/gradcheck.hpp"
#include "emotl/gradcheck_suite.hpp"
#include "emotl/layers.hpp"
#include "emotl/metrics.hpp"
#include "emotl/model.hpp"
#include "emotl/optim.hpp"
#include "emotl/pretrain.hpp"
#include "emotl/rng.hpp"
#include "emotl/synthetic.hpp"
#include "emotl/tensor.hpp"
#include "emotl/tokenizer.hpp"
#include "emotl/training.hpp"
#include "emotl/transfer.hpp"
#include "emotl/vocabulary.hpp"
