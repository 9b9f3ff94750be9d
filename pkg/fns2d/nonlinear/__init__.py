# nonlinear package
