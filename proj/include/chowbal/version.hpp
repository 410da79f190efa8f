#pragma once

#define CHOWBAL_VERSION "0.1.0"
