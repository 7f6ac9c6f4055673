#ifndef SSVOC_SSVOC_HPP
#define SSVOC_SSVOC_HPP

#include "ssvoc/config.hpp"
#include "ssvoc/dataset_io.hpp"
#include "ssvoc/error.hpp"
#include "ssvoc/evaluation.hpp"
#include "ssvoc/experiment.hpp"
#include "ssvoc/fit.hpp"
#include "ssvoc/gradcheck.hpp"
#include "ssvoc/lbfgs.hpp"
#include "ssvoc/linalg.hpp"
#include "ssvoc/model_io.hpp"
#include "ssvoc/objective.hpp"
#include "ssvoc/parallel.hpp"
#include "ssvoc/recognition.hpp"
#include "ssvoc/sgd.hpp"
#include "ssvoc/standardize.hpp"
#include "ssvoc/synthetic.hpp"
#include "ssvoc/vocabulary.hpp"
#include "ssvoc/word_vectors_io.hpp"

#endif  // SSVOC_SSVOC_HPP
