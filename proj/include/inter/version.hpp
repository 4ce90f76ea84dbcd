#pragma once

#define INTER_VERSION_STRING "0.1.0"
