# noise package
