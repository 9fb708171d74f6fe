#ifndef PRANK_PRANK_HPP
#define PRANK_PRANK_HPP

#include "prank/bank.hpp"
#include "prank/core_types.hpp"
#include "prank/dataset.hpp"
#include "prank/encoders.hpp"
#include "prank/inference.hpp"
#include "prank/kmeans.hpp"
#include "prank/losses.hpp"
#include "prank/metrics.hpp"
#include "prank/mips_index.hpp"
#include "prank/optim.hpp"
#include "prank/synthetic_world.hpp"
#include "prank/trainer.hpp"

#endif  // PRANK_PRANK_HPP
