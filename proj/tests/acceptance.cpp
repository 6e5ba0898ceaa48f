#include "rgmwm/rgmwm.hpp"
int main() { return 0; }
