# Physics models and the least-squares engine
