#pragma once

#include "eldm/autoencoder.hpp"
#include "eldm/data_model.hpp"
#include "eldm/error.hpp"
#include "eldm/factor_geometry.hpp"
#include "eldm/linalg.hpp"
#include "eldm/local_pca.hpp"
#include "eldm/log.hpp"
#include "eldm/nmf.hpp"
#include "eldm/pca.hpp"
#include "eldm/regression.hpp"
#include "eldm/synthetic.hpp"
