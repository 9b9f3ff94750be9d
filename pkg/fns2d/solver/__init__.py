# solver package
