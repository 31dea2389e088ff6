#pragma once

#include "zscd/change.hpp"
#include "zscd/correspondence.hpp"
#include "zscd/error.hpp"
#include "zscd/evaluation.hpp"
#include "zscd/geometry.hpp"
#include "zscd/image_io.hpp"
#include "zscd/manifest.hpp"
#include "zscd/mask.hpp"
#include "zscd/pipeline.hpp"
#include "zscd/random.hpp"
#include "zscd/segments.hpp"
#include "zscd/tensor_store.hpp"
