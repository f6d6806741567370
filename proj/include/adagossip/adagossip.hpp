#ifndef ADAGOSSIP_ADAGOSSIP_HPP_
#define ADAGOSSIP_ADAGOSSIP_HPP_

#include "adagossip/compression.hpp"
#include "adagossip/config.hpp"
#include "adagossip/consensus.hpp"
#include "adagossip/errors.hpp"
#include "adagossip/experiment.hpp"
#include "adagossip/learning.hpp"
#include "adagossip/models_data.hpp"
#include "adagossip/rng.hpp"
#include "adagossip/topology.hpp"

#endif  // ADAGOSSIP_ADAGOSSIP_HPP_
