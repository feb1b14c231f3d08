#pragma once

#include "volnet/behavior.hpp"
#include "volnet/community.hpp"
#include "volnet/explain.hpp"
#include "volnet/featureset.hpp"
#include "volnet/graph.hpp"
#include "volnet/ingest.hpp"
#include "volnet/models.hpp"
#include "volnet/pipeline.hpp"
#include "volnet/svg.hpp"
#include "volnet/synthgen.hpp"
#include "volnet/tscluster.hpp"
