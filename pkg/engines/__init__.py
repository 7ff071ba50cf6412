"""Grid, interface, algebroid, groupoid and mechanics engines for GReg."""
