"""Law-adaptive hybrid decision making for simulated self-driving vehicles."""
