#pragma once

#include "dynsamp/core.hpp"
#include "dynsamp/ingest.hpp"
#include "dynsamp/reconstruction.hpp"
#include "dynsamp/rd.hpp"
#include "dynsamp/io.hpp"
#include "dynsamp/features.hpp"
#include "dynsamp/models.hpp"
#include "dynsamp/unet.hpp"
#include "dynsamp/erd.hpp"
#include "dynsamp/metrics.hpp"
#include "dynsamp/acquisition.hpp"
#include "dynsamp/experiment.hpp"
