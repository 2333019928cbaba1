"""Co-design of morphology and MPC weights for a jet-powered humanoid."""
