"""Source package for boxtrack."""
