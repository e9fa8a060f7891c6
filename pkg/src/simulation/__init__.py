"""Monte-Carlo scenario generation."""
