"""Case-study generators: ring two-phase commit and the eventually-serializable data service."""
