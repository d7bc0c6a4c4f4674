#pragma once

#include "moc/expressivity.hpp"
#include "moc/ffn.hpp"
#include "moc/inference.hpp"
#include "moc/masking.hpp"
#include "moc/matrix.hpp"
#include "moc/matrix_io.hpp"
#include "moc/memory_model.hpp"
#include "moc/moc_layer.hpp"
#include "moc/random.hpp"
#include "moc/trainer.hpp"
